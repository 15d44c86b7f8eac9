#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "hmvgg/tensor.hpp"

namespace hmvgg {

class Tape;
class GradientMap;

// Handle to a value recorded on a tape. Copying a Variable copies the
// handle, not the tensor; the tape owns all storage.
class Variable {
public:
    Variable() = default;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    std::int64_t node_id() const { return id_; }
    bool requires_grad() const;
    Tape* tape() const { return tape_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Variable(Tape* tape, std::int64_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::int64_t id_ = -1;
};

// Given the gradient flowing into a node's output, produce one gradient
// per input, in input order.
using BackwardFn = std::function<std::vector<Tensor>(const Tensor& upstream)>;

// Append-only record of one computation. Node order is topological by
// construction; backward walks it in exact reverse.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Variable leaf(Tensor value, bool requires_grad = false);

    // Record an op node. `fn` is retained only when some input requires
    // grad; a forward pass over constants stores values alone.
    Variable record(Tensor value, const std::vector<Variable>& inputs, BackwardFn fn);

    std::int64_t size() const { return static_cast<std::int64_t>(nodes_.size()); }
    bool consumed() const { return consumed_; }

    const Tensor& value_of(std::int64_t id) const;
    bool requires_grad_of(std::int64_t id) const;

private:
    friend class GradientMap;
    friend GradientMap backward(Tape& tape, const Variable& loss);

    struct Node {
        Tensor value;
        bool requires_grad = false;
        std::vector<std::int64_t> inputs;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
    bool consumed_ = false;
};

// node-id -> gradient tensor. Nodes never reached by the backward sweep
// read as zero gradients of the right shape.
class GradientMap {
public:
    bool reached(const Variable& v) const;
    Tensor grad(const Variable& v) const;

private:
    friend GradientMap backward(Tape& tape, const Variable& loss);
    std::vector<std::optional<Tensor>> grads_;
    const Tape* tape_ = nullptr;
};

// Reverse sweep from a scalar loss. Consumes the tape: a second call on
// the same tape throws.
GradientMap backward(Tape& tape, const Variable& loss);

// ---- differentiable ops ----

Variable add(const Variable& a, const Variable& b);
Variable sub(const Variable& a, const Variable& b);
Variable mul(const Variable& a, const Variable& b);
Variable scale(const Variable& a, double factor);
Variable sigmoid(const Variable& x);
Variable relu(const Variable& x);
Variable reduce_sum(const Variable& x, const std::vector<std::int64_t>& axes, bool keep);
Variable reduce_mean(const Variable& x, const std::vector<std::int64_t>& axes, bool keep);
Variable reduce_max(const Variable& x, const std::vector<std::int64_t>& axes, bool keep);
Variable sum_all(const Variable& x);  // scalar
Variable matmul(const Variable& a, const Variable& b);
Variable reshape(const Variable& x, Shape shape);
// concatenate along `axis`; all other extents must agree
Variable concat(const std::vector<Variable>& parts, std::int64_t axis);

// Sum `grad` down to `target` under the broadcast rule (used by binary
// op backwards; exposed for op implementations in other modules).
Tensor reduce_grad_to_shape(const Tensor& grad, const Shape& target);

// ---- finite-difference oracle ----

// Scalar-valued function of one tensor, expressed in tape ops.
using ScalarFn = std::function<Variable(Tape& tape, const Variable& x)>;

// Max over elements of |analytic - central| / max(|analytic|, |central|, 1e-8)
// with central difference (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).
double grad_check(const ScalarFn& f, const Tensor& x, double eps = 1e-3);

}  // namespace hmvgg
