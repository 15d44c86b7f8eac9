#include "hmvgg/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hmvgg/ham.hpp"
#include "hmvgg/mlrm.hpp"
#include "hmvgg/model.hpp"
#include "hmvgg/rng.hpp"

namespace hmvgg {

namespace {

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

Tensor rand_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// values bounded away from zero, for kinked ops
Tensor rand_away(Rng& rng, Shape shape, double min_abs) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        const double mag = rng.uniform(min_abs, 1.0);
        t[i] = rng.uniform() < 0.5 ? -mag : mag;
    }
    return t;
}

// distinct values with a fixed minimum gap, for max-style ops
Tensor rand_spread(Rng& rng, Shape shape, double step) {
    Tensor t(std::move(shape));
    const std::int64_t n = t.numel();
    std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), std::int64_t{0});
    rng.shuffle(perm);
    for (std::int64_t i = 0; i < n; ++i) {
        t[i] = (static_cast<double>(perm[static_cast<std::size_t>(i)]) -
                static_cast<double>(n) / 2.0) *
               step;
    }
    return t;
}

void fill_random(Rng& rng, Tensor& t, double lo = -0.5, double hi = 0.5) {
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
}

// Additive shift that maximizes the distance of every value in q from zero,
// so a later finite-difference sweep through a relu stays on one smooth piece.
double place_off_kink(const std::vector<double>& q) {
    double best = 0.0, best_margin = -1.0;
    for (int k = -600; k <= 600; ++k) {
        const double cand = 0.005 * k;
        double m = std::numeric_limits<double>::infinity();
        for (double v : q) m = std::min(m, std::abs(v + cand));
        if (m > best_margin) {
            best_margin = m;
            best = cand;
        }
    }
    return best;
}

// Sets beta so that no eval-mode normalized pre-activation of `pre` lands
// near the relu kink.
void shift_bn_off_kink(const Tensor& pre, BatchNormState& bn) {
    const std::int64_t n = pre.extent(0), c = pre.extent(1);
    const std::int64_t hw = pre.extent(2) * pre.extent(3);
    for (std::int64_t ch = 0; ch < c; ++ch) {
        const double inv = 1.0 / std::sqrt(bn.running_var[ch] + bn.epsilon);
        std::vector<double> q;
        q.reserve(static_cast<std::size_t>(n * hw));
        for (std::int64_t img = 0; img < n; ++img) {
            const std::int64_t base = (img * c + ch) * hw;
            for (std::int64_t i = 0; i < hw; ++i) {
                q.push_back(bn.gamma[ch] * (pre[base + i] - bn.running_mean[ch]) * inv);
            }
        }
        bn.beta[ch] = place_off_kink(q);
    }
}

}  // namespace

double grad_check_module(const std::function<Variable(Tape&, ParamSlots*)>& make_loss,
                         Tensor* target, double eps, std::int64_t max_probes) {
    Tensor analytic;
    {
        Tape tape;
        ParamSlots slots;
        Variable loss = make_loss(tape, &slots);
        if (loss.value().numel() != 1) throw ShapeError("module loss must be scalar");
        GradientMap grads = backward(tape, loss);
        const ParamSlot* hit = nullptr;
        for (const ParamSlot& s : slots) {
            if (s.param == target) hit = &s;
        }
        if (!hit) throw Error("gradient target is not bound by make_loss");
        analytic = grads.grad(hit->var);
    }

    const std::int64_t n = target->numel();
    std::int64_t probes = n;
    std::int64_t stride = 1;
    if (max_probes > 0 && max_probes < n) {
        probes = max_probes;
        stride = n / max_probes;
    }
    auto eval = [&make_loss]() {
        Tape tape;
        return make_loss(tape, nullptr).value().item();
    };
    double worst = 0.0;
    for (std::int64_t p = 0; p < probes; ++p) {
        // the +p keeps strided probes off any structural lattice in the target
        const std::int64_t i = (p * stride + p) % n;
        const double orig = (*target)[i];
        (*target)[i] = orig + eps;
        const double up = eval();
        (*target)[i] = orig - eps;
        const double down = eval();
        (*target)[i] = orig;
        const double fd = (up - down) / (2.0 * eps);
        worst = std::max(worst, rel_err(analytic[i], fd));
    }
    return worst;
}

namespace {

// loss = sum(w * y), with fixed random w to avoid symmetric cancellation
Variable wsum(Tape& tape, const Variable& y, const Tensor& w) {
    return sum_all(mul(y, tape.leaf(w)));
}

struct Suite {
    explicit Suite(std::uint64_t seed) : rng(seed) {}

    void check(const std::string& name, const ScalarFn& fn, const Tensor& x) {
        results.push_back(OpCheck{name, grad_check(fn, x), 1e-4});
    }

    void check_module(const std::string& name,
                      const std::function<Variable(Tape&, ParamSlots*)>& make_loss,
                      Tensor* target) {
        results.push_back(OpCheck{name, grad_check_module(make_loss, target), 1e-4});
    }

    Rng rng;
    std::vector<OpCheck> results;
};

}  // namespace

std::vector<OpCheck> run_op_gradchecks(std::uint64_t seed) {
    Suite s(seed);
    Rng& rng = s.rng;

    // elementwise, with broadcasting against a smaller operand
    {
        Tensor a = rand_tensor(rng, Shape{3, 4});
        Tensor b = rand_tensor(rng, Shape{1, 4});
        Tensor w = rand_tensor(rng, Shape{3, 4});
        s.check("add.lhs",
                [b, w](Tape& t, const Variable& x) { return wsum(t, add(x, t.leaf(b)), w); }, a);
        s.check("add.rhs_broadcast",
                [a, w](Tape& t, const Variable& x) { return wsum(t, add(t.leaf(a), x), w); }, b);
        s.check("sub.rhs_broadcast",
                [a, w](Tape& t, const Variable& x) { return wsum(t, sub(t.leaf(a), x), w); }, b);
        s.check("mul.lhs",
                [b, w](Tape& t, const Variable& x) { return wsum(t, mul(x, t.leaf(b)), w); }, a);
        s.check("mul.rhs_broadcast",
                [a, w](Tape& t, const Variable& x) { return wsum(t, mul(t.leaf(a), x), w); }, b);
        s.check("scale",
                [w](Tape& t, const Variable& x) { return wsum(t, scale(x, -2.5), w); }, a);
    }
    {
        Tensor x = rand_tensor(rng, Shape{2, 5}, -3.0, 3.0);
        Tensor w = rand_tensor(rng, Shape{2, 5});
        s.check("sigmoid",
                [w](Tape& t, const Variable& v) { return wsum(t, sigmoid(v), w); }, x);
    }
    {
        Tensor x = rand_away(rng, Shape{2, 5}, 0.05);
        Tensor w = rand_tensor(rng, Shape{2, 5});
        s.check("relu", [w](Tape& t, const Variable& v) { return wsum(t, relu(v), w); }, x);
    }

    // reductions
    {
        Tensor x = rand_tensor(rng, Shape{2, 3, 4});
        Tensor w0 = rand_tensor(rng, Shape{3});
        s.check("reduce_sum.axes02",
                [w0](Tape& t, const Variable& v) {
                    return wsum(t, reduce_sum(v, {0, 2}, false), w0);
                },
                x);
        Tensor w1 = rand_tensor(rng, Shape{2, 1, 4});
        s.check("reduce_mean.keep",
                [w1](Tape& t, const Variable& v) {
                    return wsum(t, reduce_mean(v, {1}, true), w1);
                },
                x);
        Tensor xs = rand_spread(rng, Shape{2, 3, 4}, 0.1);
        Tensor w2 = rand_tensor(rng, Shape{2, 3});
        s.check("reduce_max.axis2",
                [w2](Tape& t, const Variable& v) {
                    return wsum(t, reduce_max(v, {2}, false), w2);
                },
                xs);
        s.check("sum_all", [](Tape& t, const Variable& v) { (void)t; return sum_all(v); }, x);
    }

    // shape ops
    {
        Tensor x = rand_tensor(rng, Shape{2, 6});
        Tensor w = rand_tensor(rng, Shape{3, 4});
        s.check("reshape",
                [w](Tape& t, const Variable& v) { return wsum(t, reshape(v, Shape{3, 4}), w); },
                x);
    }
    {
        Tensor a = rand_tensor(rng, Shape{2, 2, 3});
        Tensor b = rand_tensor(rng, Shape{2, 1, 3});
        Tensor w = rand_tensor(rng, Shape{2, 3, 3});
        s.check("concat.part0",
                [b, w](Tape& t, const Variable& v) {
                    return wsum(t, concat({v, t.leaf(b)}, 1), w);
                },
                a);
        s.check("concat.part1",
                [a, w](Tape& t, const Variable& v) {
                    return wsum(t, concat({t.leaf(a), v}, 1), w);
                },
                b);
    }
    {
        Tensor a = rand_tensor(rng, Shape{3, 4});
        Tensor b = rand_tensor(rng, Shape{4, 2});
        Tensor w = rand_tensor(rng, Shape{3, 2});
        s.check("matmul.lhs",
                [b, w](Tape& t, const Variable& v) { return wsum(t, matmul(v, t.leaf(b)), w); },
                a);
        s.check("matmul.rhs",
                [a, w](Tape& t, const Variable& v) { return wsum(t, matmul(t.leaf(a), v), w); },
                b);
    }

    // convolution, three geometries
    {
        ConvParams cp = ConvParams::make(3, 2, 3, 1, 1, 1);
        fill_random(rng, cp.kernel);
        fill_random(rng, cp.bias);
        Tensor x = rand_tensor(rng, Shape{2, 2, 5, 5});
        Tensor w = rand_tensor(rng, Shape{2, 3, 5, 5});
        s.check("conv2d.pad1.input",
                [cp, w](Tape& t, const Variable& v) {
                    return wsum(t, conv2d(v, bind(t, const_cast<ConvParams&>(cp), false)), w);
                },
                x);
        auto loss = [&cp, x, w](Tape& t, ParamSlots* slots) {
            ConvVars cv = bind(t, cp, slots != nullptr, slots);
            return wsum(t, conv2d(t.leaf(x), cv), w);
        };
        s.check_module("conv2d.pad1.kernel", loss, &cp.kernel);
        s.check_module("conv2d.pad1.bias", loss, &cp.bias);
    }
    {
        ConvParams cp = ConvParams::make(2, 2, 3, 2, 1, 1);
        fill_random(rng, cp.kernel);
        fill_random(rng, cp.bias);
        Tensor x = rand_tensor(rng, Shape{2, 2, 6, 6});
        Tensor w = rand_tensor(rng, Shape{2, 2, 3, 3});
        s.check("conv2d.stride2.input",
                [cp, w](Tape& t, const Variable& v) {
                    return wsum(t, conv2d(v, bind(t, const_cast<ConvParams&>(cp), false)), w);
                },
                x);
        auto loss = [&cp, x, w](Tape& t, ParamSlots* slots) {
            ConvVars cv = bind(t, cp, slots != nullptr, slots);
            return wsum(t, conv2d(t.leaf(x), cv), w);
        };
        s.check_module("conv2d.stride2.kernel", loss, &cp.kernel);
    }
    {
        ConvParams cp = ConvParams::make(2, 1, 3, 1, 2, 2);
        fill_random(rng, cp.kernel);
        fill_random(rng, cp.bias);
        Tensor x = rand_tensor(rng, Shape{1, 1, 7, 7});
        Tensor w = rand_tensor(rng, Shape{1, 2, 7, 7});
        s.check("conv2d.dilation2.input",
                [cp, w](Tape& t, const Variable& v) {
                    return wsum(t, conv2d(v, bind(t, const_cast<ConvParams&>(cp), false)), w);
                },
                x);
        auto loss = [&cp, x, w](Tape& t, ParamSlots* slots) {
            ConvVars cv = bind(t, cp, slots != nullptr, slots);
            return wsum(t, conv2d(t.leaf(x), cv), w);
        };
        s.check_module("conv2d.dilation2.kernel", loss, &cp.kernel);
    }

    // pooling and resampling
    {
        Tensor x = rand_spread(rng, Shape{2, 2, 4, 4}, 0.1);
        Tensor w = rand_tensor(rng, Shape{2, 2, 2, 2});
        s.check("maxpool2d",
                [w](Tape& t, const Variable& v) { return wsum(t, maxpool2d(v), w); }, x);
    }
    {
        Tensor x = rand_tensor(rng, Shape{2, 3, 4, 4});
        Tensor w = rand_tensor(rng, Shape{2, 3, 1, 1});
        s.check("gap", [w](Tape& t, const Variable& v) { return wsum(t, gap(v), w); }, x);
    }
    {
        Tensor x = rand_tensor(rng, Shape{1, 2, 3, 3});
        Tensor w = rand_tensor(rng, Shape{1, 2, 5, 7});
        s.check("upsample_nearest.5x7",
                [w](Tape& t, const Variable& v) {
                    return wsum(t, upsample_nearest(v, 5, 7), w);
                },
                x);
        Tensor w2 = rand_tensor(rng, Shape{1, 2, 6, 6});
        s.check("upsample_nearest.2x",
                [w2](Tape& t, const Variable& v) {
                    return wsum(t, upsample_nearest(v, 6, 6), w2);
                },
                x);
    }

    // batch normalization, both modes
    {
        BatchNormState st = BatchNormState::make(3);
        fill_random(rng, st.gamma, 0.5, 1.5);
        fill_random(rng, st.beta, -0.3, 0.3);
        // Train-mode normalization is scale-invariant in x, so a wide input
        // spread shrinks the difference quotient's curvature term relative to
        // the gradient and keeps the probe step effectively small.
        Tensor x = rand_tensor(rng, Shape{2, 3, 4, 4}, -6.0, 6.0);
        Tensor w = rand_tensor(rng, Shape{2, 3, 4, 4});
        s.check("batchnorm.train.input",
                [st, w](Tape& t, const Variable& v) mutable {
                    return wsum(t, batchnorm(v, bind(t, st, false), Mode::Train), w);
                },
                x);
        auto loss = [&st, x, w](Tape& t, ParamSlots* slots) {
            BatchNormVars bv = bind(t, st, slots != nullptr, slots);
            return wsum(t, batchnorm(t.leaf(x), bv, Mode::Train), w);
        };
        s.check_module("batchnorm.train.gamma", loss, &st.gamma);
        s.check_module("batchnorm.train.beta", loss, &st.beta);

        fill_random(rng, st.running_mean, -0.5, 0.5);
        fill_random(rng, st.running_var, 0.5, 2.0);
        s.check("batchnorm.eval.input",
                [st, w](Tape& t, const Variable& v) mutable {
                    return wsum(t, batchnorm(v, bind(t, st, false), Mode::Eval), w);
                },
                x);
        auto eval_loss = [&st, x, w](Tape& t, ParamSlots* slots) {
            BatchNormVars bv = bind(t, st, slots != nullptr, slots);
            return wsum(t, batchnorm(t.leaf(x), bv, Mode::Eval), w);
        };
        s.check_module("batchnorm.eval.gamma", eval_loss, &st.gamma);
    }

    // fully connected
    {
        Tensor x = rand_tensor(rng, Shape{3, 4});
        Tensor weight = rand_tensor(rng, Shape{2, 4});
        Tensor bias = rand_tensor(rng, Shape{2});
        Tensor w = rand_tensor(rng, Shape{3, 2});
        s.check("fc.input",
                [weight, bias, w](Tape& t, const Variable& v) {
                    return wsum(t, fc(v, t.leaf(weight), t.leaf(bias)), w);
                },
                x);
        s.check("fc.weight",
                [x, bias, w](Tape& t, const Variable& v) {
                    return wsum(t, fc(t.leaf(x), v, t.leaf(bias)), w);
                },
                weight);
        s.check("fc.bias",
                [x, weight, w](Tape& t, const Variable& v) {
                    return wsum(t, fc(t.leaf(x), t.leaf(weight), v), w);
                },
                bias);
    }

    // loss
    {
        Tensor logits = rand_tensor(rng, Shape{4, 3}, -2.0, 2.0);
        const std::vector<int> labels{0, 2, 1, 1};
        s.check("softmax_ce",
                [labels](Tape& t, const Variable& v) {
                    (void)t;
                    return softmax_ce(v, labels);
                },
                logits);
    }

    // hybrid attention: both gate paths, the whole module, and each parameter
    {
        HamParams hp = HamParams::make(8, 4);
        // Moderate magnitudes keep the gates near their linear range; the
        // multiplicative skip connections otherwise let an element's gradient
        // paths cancel until gate curvature dominates the difference quotient.
        fill_random(rng, hp.spatial.kernel, -0.35, 0.35);
        fill_random(rng, hp.spatial.bias, -0.35, 0.35);
        fill_random(rng, hp.fc1_weight, -0.35, 0.35);
        fill_random(rng, hp.fc2_weight, -0.35, 0.35);
        fill_random(rng, hp.fc2_bias, -0.35, 0.35);
        Tensor x = rand_tensor(rng, Shape{2, 8, 3, 4}, -0.5, 0.5);
        // Loss weights away from zero keep each element's direct-path gradient
        // from vanishing.
        Tensor w = rand_away(rng, Shape{2, 8, 3, 4}, 0.3);

        // hidden-layer biases chosen so the squeeze MLP's pre-activations sit
        // clear of the relu kink for this input
        {
            const std::int64_t n = x.extent(0), c = x.extent(1);
            const std::int64_t hw = x.extent(2) * x.extent(3);
            for (int j = 0; j < hp.hidden; ++j) {
                std::vector<double> q;
                for (std::int64_t img = 0; img < n; ++img) {
                    double acc = 0.0;
                    for (std::int64_t ch = 0; ch < c; ++ch) {
                        double mean = 0.0;
                        const std::int64_t base = (img * c + ch) * hw;
                        for (std::int64_t i = 0; i < hw; ++i) mean += x[base + i];
                        acc += hp.fc1_weight[j * c + ch] * (mean / static_cast<double>(hw));
                    }
                    q.push_back(acc);
                }
                hp.fc1_bias[j] = place_off_kink(q);
            }
        }

        s.check("spatial_attention",
                [hp, w](Tape& t, const Variable& v) {
                    HamVars hv = bind(t, const_cast<HamParams&>(hp), false);
                    return wsum(t, ham_forward(v, hv).spatial_out, w);
                },
                x);
        s.check("channel_attention",
                [hp, w](Tape& t, const Variable& v) {
                    HamVars hv = bind(t, const_cast<HamParams&>(hp), false);
                    return wsum(t, ham_forward(v, hv).channel_out, w);
                },
                x);
        s.check("ham.input",
                [hp, w](Tape& t, const Variable& v) {
                    HamVars hv = bind(t, const_cast<HamParams&>(hp), false);
                    return wsum(t, ham_forward(v, hv).output, w);
                },
                x);
        auto loss = [&hp, x, w](Tape& t, ParamSlots* slots) {
            HamVars hv = bind(t, hp, slots != nullptr, slots);
            return wsum(t, ham_forward(t.leaf(x), hv).output, w);
        };
        s.check_module("ham.spatial.kernel", loss, &hp.spatial.kernel);
        s.check_module("ham.spatial.bias", loss, &hp.spatial.bias);
        s.check_module("ham.fc1.weight", loss, &hp.fc1_weight);
        s.check_module("ham.fc1.bias", loss, &hp.fc1_bias);
        s.check_module("ham.fc2.weight", loss, &hp.fc2_weight);
        s.check_module("ham.fc2.bias", loss, &hp.fc2_bias);
    }

    // residual fusion: the elementwise shortcut, then context aggregation in
    // eval mode with each branch normalization shifted off the relu kink
    // (train mode re-centers the batch every probe, putting kinks inside any
    // finite-difference sweep)
    {
        Tensor upper = rand_tensor(rng, Shape{2, 4, 5, 5});
        Tensor prev = rand_tensor(rng, Shape{2, 4, 5, 5});
        Tensor w = rand_tensor(rng, Shape{2, 4, 5, 5});
        s.check("shortcut_fuse.upper",
                [prev, w](Tape& t, const Variable& v) {
                    return wsum(t, shortcut_fuse(v, t.leaf(prev)), w);
                },
                upper);
        s.check("shortcut_fuse.prev",
                [upper, w](Tape& t, const Variable& v) {
                    return wsum(t, shortcut_fuse(t.leaf(upper), v), w);
                },
                prev);

        MlrmParams mp = MlrmParams::make(4);
        Tensor sc(upper.shape());
        for (std::int64_t i = 0; i < sc.numel(); ++i) sc[i] = upper[i] + prev[i];
        for (std::size_t b = 0; b < mp.branch_conv.size(); ++b) {
            fill_random(rng, mp.branch_conv[b].kernel);
            fill_random(rng, mp.branch_conv[b].bias);
            BatchNormState& bn = mp.branch_bn[b];
            fill_random(rng, bn.gamma, 0.5, 1.5);
            fill_random(rng, bn.running_mean, -0.2, 0.2);
            fill_random(rng, bn.running_var, 0.8, 1.2);
            shift_bn_off_kink(conv2d(sc, mp.branch_conv[b]), bn);
        }
        fill_random(rng, mp.fuse.kernel);
        fill_random(rng, mp.fuse.bias);

        s.check("context_aggregate.input",
                [mp, w](Tape& t, const Variable& v) {
                    MlrmVars mv = bind(t, const_cast<MlrmParams&>(mp), false);
                    return wsum(t, context_aggregate(v, mv, Mode::Eval), w);
                },
                sc);
        s.check("mlrm.upper",
                [mp, prev, w](Tape& t, const Variable& v) {
                    MlrmVars mv = bind(t, const_cast<MlrmParams&>(mp), false);
                    return wsum(t, mlrm_forward(v, t.leaf(prev), mv, Mode::Eval).output, w);
                },
                upper);
        auto loss = [&mp, upper, prev, w](Tape& t, ParamSlots* slots) {
            MlrmVars mv = bind(t, mp, slots != nullptr, slots);
            return wsum(t, mlrm_forward(t.leaf(upper), t.leaf(prev), mv, Mode::Eval).output, w);
        };
        s.check_module("context_aggregate.branch_d1.kernel", loss, &mp.branch_conv[0].kernel);
        s.check_module("context_aggregate.branch_d2.kernel", loss, &mp.branch_conv[1].kernel);
        s.check_module("context_aggregate.branch_d4.kernel", loss, &mp.branch_conv[2].kernel);
        s.check_module("context_aggregate.branch_d2.gamma", loss, &mp.branch_bn[1].gamma);
        s.check_module("context_aggregate.branch_d2.beta", loss, &mp.branch_bn[1].beta);
        s.check_module("context_aggregate.fuse.kernel", loss, &mp.fuse.kernel);
        s.check_module("context_aggregate.fuse.bias", loss, &mp.fuse.bias);
    }

    return s.results;
}

std::vector<OpCheck> run_full_model_gradcheck(std::uint64_t seed) {
    ModelParams params = ModelParams::make(ModelConfig::desk());
    init_params(params, seed);
    Rng rng(seed + 1);
    Tensor input = rand_tensor(rng, Shape{1, 3, 32, 32});
    const std::vector<int> labels{1};

    // Warm the running statistics toward the batch statistics so eval-mode
    // normalization sees a realistic, well-scaled state instead of the
    // initialization constants (which leave channels dead or miscentered).
    for (int pass = 0; pass < 25; ++pass) {
        Tape tape;
        ModelVars v = bind_model(tape, params, false);
        (void)model_forward(tape.leaf(input), v, Mode::Train);
    }

    auto make_loss = [&params, &input, &labels](Tape& tape, ParamSlots* slots) {
        ModelVars v = bind_model(tape, params, slots != nullptr, slots);
        Variable x = tape.leaf(input, slots != nullptr);
        if (slots) slots->push_back(ParamSlot{&input, x});
        ForwardTrace trace = model_forward(x, v, Mode::Eval);
        return softmax_ce(trace.logits, labels);
    };

    // A probe step of 1e-3 would sweep interior relu and maxpool kinks along
    // with it on a network this deep; 1e-6 keeps the difference quotient on
    // one smooth piece while staying far above the f64 noise floor.
    std::vector<OpCheck> results;
    auto probe = [&](const std::string& name, Tensor* target, std::int64_t max_probes) {
        results.push_back(
            OpCheck{name, grad_check_module(make_loss, target, 1e-6, max_probes), 1e-3});
    };

    probe("input", &input, -1);
    probe("block1.layer1.kernel", &params.blocks[0][0].conv.kernel, 8);
    probe("block2.layer2.gamma", &params.blocks[1][1].bn.gamma, 8);
    probe("block4.layer3.kernel", &params.blocks[3][2].conv.kernel, 8);
    probe("ham3.spatial.kernel", &params.ham[0].spatial.kernel, 8);
    probe("ham4.fc1.weight", &params.ham[1].fc1_weight, 8);
    probe("ham5.fc2.bias", &params.ham[2].fc2_bias, 8);
    probe("lateral4.kernel", &params.lateral4.conv.kernel, 8);
    probe("fuse1.branch_d2.kernel", &params.fuse1.branch_conv[1].kernel, 8);
    probe("fuse2.fuse.kernel", &params.fuse2.fuse.kernel, 8);
    probe("global_proj.kernel", &params.global_proj.kernel, 8);
    probe("head1.weight", &params.head1_weight, 8);
    probe("head2.bias", &params.head2_bias, 8);
    return results;
}

}  // namespace hmvgg
