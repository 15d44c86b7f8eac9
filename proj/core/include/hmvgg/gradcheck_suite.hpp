#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hmvgg/autograd.hpp"
#include "hmvgg/nnops.hpp"

namespace hmvgg {

struct OpCheck {
    std::string name;
    double max_rel_err = 0.0;
    double threshold = 1e-4;
};

// Central-difference check of d(loss)/d(*target). make_loss rebuilds the loss
// on a fresh tape per evaluation and fills slots only on the analytic pass;
// finite-difference passes see the probe mutation through *target. When
// max_probes is positive and smaller than the target, an evenly strided
// subset of elements is probed.
double grad_check_module(const std::function<Variable(Tape&, ParamSlots*)>& make_loss,
                         Tensor* target, double eps = 1e-3, std::int64_t max_probes = -1);

// Small-shape checks covering every differentiable operation, including the
// attention and residual-fusion modules parameter by parameter.
std::vector<OpCheck> run_op_gradchecks(std::uint64_t seed);

// End-to-end checks on the small preset: the full loss differentiated against
// the input image and a spread of parameter tensors across the network.
std::vector<OpCheck> run_full_model_gradcheck(std::uint64_t seed);

}  // namespace hmvgg
