#pragma once

#include <array>

#include "hmvgg/autograd.hpp"
#include "hmvgg/nnops.hpp"

namespace hmvgg {

// Residual fusion of two equal-shape feature maps followed by multi-dilation
// context aggregation. The aggregated context is projected back to C channels
// and added to the fused input, so zero aggregation weights pass it through.
struct MlrmParams {
    static constexpr std::array<int, 3> kDilations{1, 2, 4};

    std::array<ConvParams, 3> branch_conv;   // 3x3, C -> C, padding = dilation
    std::array<BatchNormState, 3> branch_bn;
    ConvParams fuse;                         // 1x1, 3C -> C
    int channels = 0;

    static MlrmParams make(int channels);
};

struct MlrmVars {
    std::array<ConvVars, 3> branch_conv;
    std::array<BatchNormVars, 3> branch_bn;
    ConvVars fuse;
};

MlrmVars bind(Tape& tape, MlrmParams& p, bool requires_grad, ParamSlots* slots = nullptr);

// Elementwise sum; the operands must already agree in shape.
Variable shortcut_fuse(const Variable& upper, const Variable& prev);

// sc + fuse1x1(concat(branch_d(sc) for d in {1, 2, 4}))
Variable context_aggregate(const Variable& sc, const MlrmVars& v, Mode mode);

struct MlrmTrace {
    Variable shortcut;
    std::array<Variable, 3> branches;
    Variable aggregated;
    Variable output;
};

MlrmTrace mlrm_forward(const Variable& upper, const Variable& prev, const MlrmVars& v, Mode mode);

}  // namespace hmvgg
