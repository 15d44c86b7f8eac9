#pragma once

#include <vector>

#include "hmvgg/autograd.hpp"
#include "hmvgg/tensor.hpp"

namespace hmvgg {

enum class Mode { Train, Eval };

// Square-kernel 2-d convolution parameters, kernel layout
// [C_out x C_in x k x k].
struct ConvParams {
    Tensor kernel;
    Tensor bias;  // [C_out]
    int stride = 1;
    int padding = 0;
    int dilation = 1;

    static ConvParams make(int out_channels, int in_channels, int kernel_size, int stride = 1,
                           int padding = 0, int dilation = 1);

    int out_channels() const { return static_cast<int>(kernel.extent(0)); }
    int in_channels() const { return static_cast<int>(kernel.extent(1)); }
    int kernel_size() const { return static_cast<int>(kernel.extent(2)); }
};

// floor((in + 2 pad - dilation (k - 1) - 1) / stride) + 1; throws if < 1
std::int64_t conv_out_extent(std::int64_t in, int kernel, int stride, int padding, int dilation);

// Per-channel affine + running statistics. Train-mode calls mutate the
// running stats, so a state object belongs to one training loop at a time.
struct BatchNormState {
    Tensor gamma;         // [C], learnable
    Tensor beta;          // [C], learnable
    Tensor running_mean;  // [C]
    Tensor running_var;   // [C]
    double momentum = 0.1;
    double epsilon = 1e-5;

    static BatchNormState make(int channels);
};

// ---- raw forward ops ----

Tensor conv2d(const Tensor& x, const ConvParams& p);
Tensor maxpool2d(const Tensor& x);  // fixed 2x2 window, stride 2
Tensor gap(const Tensor& x);        // [N,C,H,W] -> [N,C,1,1] spatial mean
Tensor batchnorm(const Tensor& x, BatchNormState& state, Mode mode);
Tensor fc(const Tensor& x, const Tensor& weight, const Tensor& bias);  // x W^T + b
Tensor upsample_nearest(const Tensor& x, std::int64_t out_h, std::int64_t out_w);
double softmax_ce(const Tensor& logits, const std::vector<int>& labels);

// ---- tape-recorded ops ----

Variable conv2d(const Variable& x, const Variable& kernel, const Variable& bias, int stride,
                int padding, int dilation);
Variable maxpool2d(const Variable& x);
Variable gap(const Variable& x);
Variable batchnorm(const Variable& x, const Variable& gamma, const Variable& beta,
                   BatchNormState& state, Mode mode);
Variable fc(const Variable& x, const Variable& weight, const Variable& bias);
Variable upsample_nearest(const Variable& x, std::int64_t out_h, std::int64_t out_w);
Variable softmax_ce(const Variable& logits, const std::vector<int>& labels);  // scalar

// ---- parameter binding ----

struct ConvVars {
    Variable kernel;
    Variable bias;
    int stride = 1;
    int padding = 0;
    int dilation = 1;
};

struct BatchNormVars {
    Variable gamma;
    Variable beta;
    BatchNormState* state = nullptr;
};

// Slot recorded for every learnable tensor bound onto a tape; the
// optimizer walks slots to pair gradients with their storage.
struct ParamSlot {
    Tensor* param = nullptr;
    Variable var;
};

using ParamSlots = std::vector<ParamSlot>;

ConvVars bind(Tape& tape, ConvParams& p, bool requires_grad, ParamSlots* slots = nullptr);
BatchNormVars bind(Tape& tape, BatchNormState& s, bool requires_grad, ParamSlots* slots = nullptr);

Variable conv2d(const Variable& x, const ConvVars& p);
Variable batchnorm(const Variable& x, const BatchNormVars& bn, Mode mode);

}  // namespace hmvgg
