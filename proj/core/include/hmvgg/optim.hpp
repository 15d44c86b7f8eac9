#pragma once

#include <string>
#include <vector>

#include "hmvgg/tensor.hpp"

namespace hmvgg {

enum class OptimKind { Sgd, Adam };

struct OptimConfig {
    OptimKind kind = OptimKind::Adam;
    double lr = 1e-3;
    double momentum = 0.9;  // sgd only
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Applies one "key = value" setting; returns false when the key is not an
// optimizer key. Keys: optimizer (adam|sgd), lr, momentum, beta1, beta2, epsilon.
bool apply_optim_entry(OptimConfig& config, const std::string& key, const std::string& value);

class Optimizer {
public:
    explicit Optimizer(OptimConfig config);

    // Fixes the parameter set; state tensors start at zero.
    void register_params(std::vector<Tensor*> params);

    // In-place update from gradients aligned with the registered parameters.
    void step(const std::vector<Tensor>& grads);

    std::int64_t step_count() const { return steps_; }
    const OptimConfig& config() const { return config_; }

private:
    OptimConfig config_;
    std::vector<Tensor*> params_;
    std::vector<Tensor> first_;   // momentum / first moment
    std::vector<Tensor> second_;  // adam second moment
    std::int64_t steps_ = 0;
};

}  // namespace hmvgg
