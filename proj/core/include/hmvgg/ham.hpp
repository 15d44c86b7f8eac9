#pragma once

#include "hmvgg/autograd.hpp"
#include "hmvgg/nnops.hpp"

namespace hmvgg {

// Hybrid attention: a spatial gate and a channel gate computed from the same
// feature map, merged through a third sigmoid that rescales the input.
struct HamParams {
    ConvParams spatial;  // 1x1 conv, C -> 1
    Tensor fc1_weight, fc1_bias;  // C -> hidden
    Tensor fc2_weight, fc2_bias;  // hidden -> C
    int channels = 0;
    int hidden = 0;

    static HamParams make(int channels, int reduction = 16);
};

struct HamVars {
    ConvVars spatial;
    Variable fc1_weight, fc1_bias, fc2_weight, fc2_bias;
};

HamVars bind(Tape& tape, HamParams& p, bool requires_grad, ParamSlots* slots = nullptr);

struct HamTrace {
    Variable spatial_gate;   // sigmoid(conv1x1(x)), N x 1 x H x W
    Variable spatial_out;    // x * spatial_gate
    Variable pooled;         // gap(x), N x C x 1 x 1
    Variable channel_gate;   // sigmoid(fc2(relu(fc1(pooled)))), N x C x 1 x 1
    Variable channel_out;    // x * channel_gate
    Variable output;         // x * sigmoid(spatial_out + channel_out)
};

HamTrace ham_forward(const Variable& x, const HamVars& v);

}  // namespace hmvgg
