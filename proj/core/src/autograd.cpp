#include "hmvgg/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace hmvgg {

const Tensor& Variable::value() const {
    if (!tape_) throw Error("use of default-constructed Variable");
    return tape_->value_of(id_);
}

bool Variable::requires_grad() const {
    if (!tape_) throw Error("use of default-constructed Variable");
    return tape_->requires_grad_of(id_);
}

Variable Tape::leaf(Tensor value, bool requires_grad) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    nodes_.push_back(std::move(node));
    return Variable(this, size() - 1);
}

Variable Tape::record(Tensor value, const std::vector<Variable>& inputs, BackwardFn fn) {
    Node node;
    node.value = std::move(value);
    for (const auto& in : inputs) {
        if (in.tape() != this) throw Error("op inputs recorded on different tapes");
        node.inputs.push_back(in.node_id());
        node.requires_grad = node.requires_grad || in.requires_grad();
    }
    if (node.requires_grad) node.backward = std::move(fn);
    nodes_.push_back(std::move(node));
    return Variable(this, size() - 1);
}

const Tensor& Tape::value_of(std::int64_t id) const {
    return nodes_[static_cast<std::size_t>(id)].value;
}

bool Tape::requires_grad_of(std::int64_t id) const {
    return nodes_[static_cast<std::size_t>(id)].requires_grad;
}

bool GradientMap::reached(const Variable& v) const {
    if (v.tape() != tape_) throw Error("variable queried against a foreign gradient map");
    return grads_[static_cast<std::size_t>(v.node_id())].has_value();
}

Tensor GradientMap::grad(const Variable& v) const {
    if (v.tape() != tape_) throw Error("variable queried against a foreign gradient map");
    const auto& slot = grads_[static_cast<std::size_t>(v.node_id())];
    if (slot.has_value()) return *slot;
    return Tensor(v.shape(), 0.0);
}

GradientMap backward(Tape& tape, const Variable& loss) {
    if (loss.tape() != &tape) throw Error("loss was not recorded on this tape");
    if (tape.consumed_) throw Error("backward called twice on a consumed tape");
    tape.consumed_ = true;
    if (loss.value().numel() != 1) {
        throw ShapeError("backward requires a scalar loss, got " +
                         loss.shape().to_string());
    }

    GradientMap map;
    map.tape_ = &tape;
    map.grads_.resize(tape.nodes_.size());
    map.grads_[static_cast<std::size_t>(loss.node_id())] = Tensor(loss.shape(), 1.0);

    for (std::int64_t id = loss.node_id(); id >= 0; --id) {
        auto& slot = map.grads_[static_cast<std::size_t>(id)];
        if (!slot.has_value()) continue;
        const auto& node = tape.nodes_[static_cast<std::size_t>(id)];
        if (!node.backward) continue;  // leaf or constant subtree
        std::vector<Tensor> input_grads = node.backward(*slot);
        if (input_grads.size() != node.inputs.size()) {
            throw Error("backward rule returned " + std::to_string(input_grads.size()) +
                        " gradients for " + std::to_string(node.inputs.size()) + " inputs");
        }
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
            const auto in_id = static_cast<std::size_t>(node.inputs[k]);
            if (!tape.nodes_[in_id].requires_grad) continue;
            auto& acc = map.grads_[in_id];
            if (!acc.has_value()) {
                acc = std::move(input_grads[k]);
            } else {
                double* pa = acc->data();
                const double* pg = input_grads[k].data();
                const std::int64_t n = acc->numel();
                for (std::int64_t i = 0; i < n; ++i) pa[i] += pg[i];
            }
        }
    }
    return map;
}

// ---- broadcast-aware gradient reduction ----

Tensor reduce_grad_to_shape(const Tensor& grad, const Shape& target) {
    if (grad.shape() == target) return grad;
    const std::int64_t extra = grad.rank() - target.rank();
    std::vector<std::int64_t> axes;
    for (std::int64_t i = 0; i < extra; ++i) axes.push_back(i);
    for (std::int64_t i = 0; i < target.rank(); ++i) {
        if (target.dims()[static_cast<std::size_t>(i)] == 1 &&
            grad.extent(i + extra) != 1) {
            axes.push_back(i + extra);
        }
    }
    Tensor reduced = axes.empty() ? grad : reduce_sum(grad, axes, true);
    return Tensor::from_data(target, std::move(reduced.buffer()));
}

// ---- op helpers ----

namespace {

Tape& tape_of(const Variable& v) {
    if (!v.valid()) throw Error("op applied to default-constructed Variable");
    return *v.tape();
}

}  // namespace

Variable add(const Variable& a, const Variable& b) {
    Tape& tape = tape_of(a);
    Tensor out = add(a.value(), b.value());
    const Shape sa = a.shape(), sb = b.shape();
    return tape.record(std::move(out), {a, b}, [sa, sb](const Tensor& g) {
        return std::vector<Tensor>{reduce_grad_to_shape(g, sa), reduce_grad_to_shape(g, sb)};
    });
}

Variable sub(const Variable& a, const Variable& b) {
    Tape& tape = tape_of(a);
    Tensor out = sub(a.value(), b.value());
    const Shape sa = a.shape(), sb = b.shape();
    return tape.record(std::move(out), {a, b}, [sa, sb](const Tensor& g) {
        return std::vector<Tensor>{reduce_grad_to_shape(g, sa),
                                   reduce_grad_to_shape(scale(g, -1.0), sb)};
    });
}

Variable mul(const Variable& a, const Variable& b) {
    Tape& tape = tape_of(a);
    Tensor out = mul(a.value(), b.value());
    const Shape sa = a.shape(), sb = b.shape();
    Tensor av = a.value(), bv = b.value();
    return tape.record(std::move(out), {a, b}, [sa, sb, av, bv](const Tensor& g) {
        return std::vector<Tensor>{reduce_grad_to_shape(mul(g, bv), sa),
                                   reduce_grad_to_shape(mul(g, av), sb)};
    });
}

Variable scale(const Variable& a, double factor) {
    Tape& tape = tape_of(a);
    return tape.record(scale(a.value(), factor), {a}, [factor](const Tensor& g) {
        return std::vector<Tensor>{scale(g, factor)};
    });
}

Variable sigmoid(const Variable& x) {
    Tape& tape = tape_of(x);
    Tensor out = sigmoid(x.value());
    Tensor saved = out;
    return tape.record(std::move(out), {x}, [saved](const Tensor& g) {
        Tensor dx(saved.shape());
        const double* ps = saved.data();
        const double* pg = g.data();
        double* pd = dx.data();
        const std::int64_t n = dx.numel();
        for (std::int64_t i = 0; i < n; ++i) pd[i] = pg[i] * ps[i] * (1.0 - ps[i]);
        return std::vector<Tensor>{std::move(dx)};
    });
}

Variable relu(const Variable& x) {
    Tape& tape = tape_of(x);
    Tensor saved = x.value();  // subgradient 0 at exactly 0
    return tape.record(relu(x.value()), {x}, [saved](const Tensor& g) {
        Tensor dx(saved.shape());
        const double* px = saved.data();
        const double* pg = g.data();
        double* pd = dx.data();
        const std::int64_t n = dx.numel();
        for (std::int64_t i = 0; i < n; ++i) pd[i] = px[i] > 0.0 ? pg[i] : 0.0;
        return std::vector<Tensor>{std::move(dx)};
    });
}

namespace {

// Expand a reduced gradient (keep=false or keep=true) back over the
// original shape, stretching reduced axes.
Tensor broadcast_reduced_grad(const Tensor& g, const Shape& in_shape,
                              const std::vector<std::int64_t>& axes, bool keep) {
    Tensor gk = g;
    if (!keep) {
        std::vector<std::int64_t> kept(in_shape.dims());
        for (auto ax : axes) kept[static_cast<std::size_t>(ax)] = 1;
        gk = Tensor::from_data(Shape(kept), std::move(gk.buffer()));
    }
    return mul(Tensor(in_shape, 1.0), gk);  // stride-0 stretch
}

}  // namespace

Variable reduce_sum(const Variable& x, const std::vector<std::int64_t>& axes, bool keep) {
    Tape& tape = tape_of(x);
    const Shape in_shape = x.shape();
    return tape.record(reduce_sum(x.value(), axes, keep), {x},
                       [in_shape, axes, keep](const Tensor& g) {
                           return std::vector<Tensor>{
                               broadcast_reduced_grad(g, in_shape, axes, keep)};
                       });
}

Variable reduce_mean(const Variable& x, const std::vector<std::int64_t>& axes, bool keep) {
    Tape& tape = tape_of(x);
    const Shape in_shape = x.shape();
    std::int64_t count = 1;
    for (auto ax : axes) count *= in_shape.extent(ax);
    return tape.record(reduce_mean(x.value(), axes, keep), {x},
                       [in_shape, axes, keep, count](const Tensor& g) {
                           Tensor spread = broadcast_reduced_grad(g, in_shape, axes, keep);
                           return std::vector<Tensor>{
                               scale(spread, 1.0 / static_cast<double>(count))};
                       });
}

Variable reduce_max(const Variable& x, const std::vector<std::int64_t>& axes, bool keep) {
    Tape& tape = tape_of(x);
    Tensor out = reduce_max(x.value(), axes, keep);
    const Shape in_shape = x.shape();
    Tensor saved_in = x.value();
    Tensor saved_out = out;
    return tape.record(std::move(out), {x},
                       [in_shape, axes, keep, saved_in, saved_out](const Tensor& g) {
                           // route to the first maximal element in row-major order
                           Tensor gk = g;
                           Tensor ok = saved_out;
                           if (!keep) {
                               std::vector<std::int64_t> kept(in_shape.dims());
                               for (auto ax : axes) kept[static_cast<std::size_t>(ax)] = 1;
                               gk = Tensor::from_data(Shape(kept), std::move(gk.buffer()));
                               ok = Tensor::from_data(gk.shape(), std::move(ok.buffer()));
                           }
                           Tensor dx(in_shape, 0.0);
                           // walk input row-major, keep a seen-flag per output slot
                           std::vector<bool> routed(static_cast<std::size_t>(gk.numel()), false);
                           const auto& dims = in_shape.dims();
                           const std::int64_t rank = in_shape.rank();
                           std::vector<bool> reduced(dims.size(), false);
                           for (auto ax : axes) reduced[static_cast<std::size_t>(ax)] = true;
                           const auto out_strides = row_major_strides(gk.shape());
                           std::vector<std::int64_t> idx(dims.size(), 0);
                           std::int64_t oflat = 0;
                           const std::int64_t n = saved_in.numel();
                           for (std::int64_t flat = 0; flat < n; ++flat) {
                               if (!routed[static_cast<std::size_t>(oflat)] &&
                                   saved_in[flat] == ok[oflat]) {
                                   dx[flat] = gk[oflat];
                                   routed[static_cast<std::size_t>(oflat)] = true;
                               }
                               for (std::int64_t ax = rank - 1; ax >= 0; --ax) {
                                   auto uax = static_cast<std::size_t>(ax);
                                   ++idx[uax];
                                   if (!reduced[uax]) oflat += out_strides[uax];
                                   if (idx[uax] < dims[uax]) break;
                                   if (!reduced[uax]) oflat -= out_strides[uax] * dims[uax];
                                   idx[uax] = 0;
                               }
                           }
                           return std::vector<Tensor>{std::move(dx)};
                       });
}

Variable sum_all(const Variable& x) {
    std::vector<std::int64_t> axes(static_cast<std::size_t>(x.shape().rank()));
    for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = static_cast<std::int64_t>(i);
    return reduce_sum(x, axes, false);
}

Variable matmul(const Variable& a, const Variable& b) {
    Tape& tape = tape_of(a);
    Tensor out = matmul(a.value(), b.value());
    Tensor av = a.value(), bv = b.value();
    return tape.record(std::move(out), {a, b}, [av, bv](const Tensor& g) {
        // dA = G . B^T, dB = A^T . G, written as index loops to avoid transposes
        const std::int64_t m = av.extent(0);
        const std::int64_t k = av.extent(1);
        const std::int64_t n = bv.extent(1);
        Tensor da(av.shape(), 0.0);
        Tensor db(bv.shape(), 0.0);
        for (std::int64_t i = 0; i < m; ++i) {
            for (std::int64_t j = 0; j < n; ++j) {
                const double gv = g[i * n + j];
                for (std::int64_t p = 0; p < k; ++p) {
                    da[i * k + p] += gv * bv[p * n + j];
                    db[p * n + j] += gv * av[i * k + p];
                }
            }
        }
        return std::vector<Tensor>{std::move(da), std::move(db)};
    });
}

Variable reshape(const Variable& x, Shape shape) {
    Tape& tape = tape_of(x);
    if (shape.numel() != x.value().numel()) {
        throw ShapeError("reshape from " + x.shape().to_string() + " to " + shape.to_string() +
                         " changes element count");
    }
    const Shape in_shape = x.shape();
    Tensor out = Tensor::from_data(shape, std::vector<double>(x.value().buffer()));
    return tape.record(std::move(out), {x}, [in_shape](const Tensor& g) {
        return std::vector<Tensor>{
            Tensor::from_data(in_shape, std::vector<double>(g.buffer()))};
    });
}

Variable concat(const std::vector<Variable>& parts, std::int64_t axis) {
    if (parts.empty()) throw ShapeError("concat of zero tensors");
    Tape& tape = tape_of(parts[0]);
    const Shape& first = parts[0].shape();
    if (axis < 0 || axis >= first.rank()) {
        throw ShapeError("concat axis " + std::to_string(axis) + " out of range");
    }
    std::vector<std::int64_t> out_dims = first.dims();
    std::vector<std::int64_t> part_extents{first.extent(axis)};
    for (std::size_t p = 1; p < parts.size(); ++p) {
        const Shape& s = parts[p].shape();
        if (s.rank() != first.rank()) throw ShapeError("concat rank mismatch");
        for (std::int64_t i = 0; i < s.rank(); ++i) {
            if (i == axis) continue;
            if (s.extent(i) != first.extent(i)) {
                throw ShapeError("concat extent mismatch at axis " + std::to_string(i));
            }
        }
        out_dims[static_cast<std::size_t>(axis)] += s.extent(axis);
        part_extents.push_back(s.extent(axis));
    }
    const Shape out_shape(out_dims);

    // copy slab-wise: outer = product of extents before axis,
    // inner = product after axis
    std::int64_t outer = 1, inner = 1;
    for (std::int64_t i = 0; i < axis; ++i) outer *= first.extent(i);
    for (std::int64_t i = axis + 1; i < first.rank(); ++i) inner *= first.extent(i);
    const std::int64_t out_axis = out_shape.extent(axis);

    Tensor out(out_shape);
    std::int64_t base = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const Tensor& src = parts[p].value();
        const std::int64_t ext = part_extents[p];
        for (std::int64_t o = 0; o < outer; ++o) {
            const double* ps = src.data() + o * ext * inner;
            double* po = out.data() + (o * out_axis + base) * inner;
            std::copy(ps, ps + ext * inner, po);
        }
        base += ext;
    }

    std::vector<Shape> part_shapes;
    part_shapes.reserve(parts.size());
    for (const auto& p : parts) part_shapes.push_back(p.shape());

    return tape.record(std::move(out), parts,
                       [part_extents, part_shapes, outer, inner, out_axis](const Tensor& g) {
                           std::vector<Tensor> grads;
                           std::int64_t base2 = 0;
                           for (std::size_t p = 0; p < part_extents.size(); ++p) {
                               const std::int64_t ext = part_extents[p];
                               std::vector<double> buf(
                                   static_cast<std::size_t>(outer * ext * inner));
                               for (std::int64_t o = 0; o < outer; ++o) {
                                   const double* pg = g.data() + (o * out_axis + base2) * inner;
                                   std::copy(pg, pg + ext * inner,
                                             buf.data() + o * ext * inner);
                               }
                               grads.push_back(
                                   Tensor::from_data(part_shapes[p], std::move(buf)));
                               base2 += ext;
                           }
                           return grads;
                       });
}

// ---- finite differences ----

double grad_check(const ScalarFn& f, const Tensor& x, double eps) {
    Tensor analytic;
    {
        Tape tape;
        Variable vx = tape.leaf(x, true);
        Variable loss = f(tape, vx);
        GradientMap grads = backward(tape, loss);
        analytic = grads.grad(vx);
    }

    auto eval = [&f](const Tensor& point) {
        Tape tape;
        Variable vx = tape.leaf(point, false);
        return f(tape, vx).value().item();
    };

    double max_rel = 0.0;
    Tensor probe = x;
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        const double orig = probe[i];
        probe[i] = orig + eps;
        const double fp = eval(probe);
        probe[i] = orig - eps;
        const double fm = eval(probe);
        probe[i] = orig;
        const double central = (fp - fm) / (2.0 * eps);
        const double a = analytic[i];
        const double denom = std::max({std::abs(a), std::abs(central), 1e-8});
        max_rel = std::max(max_rel, std::abs(a - central) / denom);
    }
    return max_rel;
}

}  // namespace hmvgg
