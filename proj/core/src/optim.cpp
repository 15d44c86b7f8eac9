#include "hmvgg/optim.hpp"

#include <cmath>

#include "hmvgg/kv.hpp"

namespace hmvgg {

bool apply_optim_entry(OptimConfig& config, const std::string& key, const std::string& value) {
    if (key == "optimizer") {
        if (value == "adam") {
            config.kind = OptimKind::Adam;
        } else if (value == "sgd") {
            config.kind = OptimKind::Sgd;
        } else {
            throw ParseError("optimizer must be 'adam' or 'sgd', got '" + value + "'");
        }
    } else if (key == "lr") {
        config.lr = parse_f64(value, "lr");
    } else if (key == "momentum") {
        config.momentum = parse_f64(value, "momentum");
    } else if (key == "beta1") {
        config.beta1 = parse_f64(value, "beta1");
    } else if (key == "beta2") {
        config.beta2 = parse_f64(value, "beta2");
    } else if (key == "epsilon") {
        config.epsilon = parse_f64(value, "epsilon");
    } else {
        return false;
    }
    return true;
}

Optimizer::Optimizer(OptimConfig config) : config_(config) {
    if (config_.lr < 0.0) throw ShapeError("learning rate must be non-negative");
}

void Optimizer::register_params(std::vector<Tensor*> params) {
    params_ = std::move(params);
    first_.clear();
    second_.clear();
    first_.reserve(params_.size());
    second_.reserve(params_.size());
    for (Tensor* p : params_) {
        first_.emplace_back(p->shape(), 0.0);
        if (config_.kind == OptimKind::Adam) second_.emplace_back(p->shape(), 0.0);
    }
    steps_ = 0;
}

void Optimizer::step(const std::vector<Tensor>& grads) {
    if (grads.size() != params_.size()) {
        throw ShapeError("optimizer got " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params_.size()) + " parameters");
    }
    ++steps_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = *params_[i];
        const Tensor& g = grads[i];
        if (g.shape() != p.shape()) {
            throw ShapeError("gradient shape " + g.shape().to_string() +
                             " does not match parameter " + p.shape().to_string());
        }
        const std::int64_t n = p.numel();
        if (config_.kind == OptimKind::Sgd) {
            Tensor& vel = first_[i];
            for (std::int64_t j = 0; j < n; ++j) {
                vel[j] = config_.momentum * vel[j] + g[j];
                p[j] -= config_.lr * vel[j];
            }
        } else {
            Tensor& m = first_[i];
            Tensor& v = second_[i];
            const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
            const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
            for (std::int64_t j = 0; j < n; ++j) {
                m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
                v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                p[j] -= config_.lr * mhat / (std::sqrt(vhat) + config_.epsilon);
            }
        }
    }
}

}  // namespace hmvgg
