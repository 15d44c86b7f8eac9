#include "hmvgg/mlrm.hpp"

namespace hmvgg {

constexpr std::array<int, 3> MlrmParams::kDilations;

MlrmParams MlrmParams::make(int channels) {
    if (channels < 1) throw ShapeError("residual module channels must be positive");
    MlrmParams p;
    p.channels = channels;
    for (std::size_t i = 0; i < kDilations.size(); ++i) {
        const int d = kDilations[i];
        p.branch_conv[i] = ConvParams::make(channels, channels, 3, 1, d, d);
        p.branch_bn[i] = BatchNormState::make(channels);
    }
    p.fuse = ConvParams::make(channels, 3 * channels, 1);
    return p;
}

MlrmVars bind(Tape& tape, MlrmParams& p, bool requires_grad, ParamSlots* slots) {
    MlrmVars v;
    for (std::size_t i = 0; i < p.branch_conv.size(); ++i) {
        v.branch_conv[i] = bind(tape, p.branch_conv[i], requires_grad, slots);
        v.branch_bn[i] = bind(tape, p.branch_bn[i], requires_grad, slots);
    }
    v.fuse = bind(tape, p.fuse, requires_grad, slots);
    return v;
}

Variable shortcut_fuse(const Variable& upper, const Variable& prev) {
    if (!(upper.shape() == prev.shape())) {
        throw ShapeError("shortcut operands must match: " + upper.shape().to_string() + " vs " +
                         prev.shape().to_string());
    }
    return add(upper, prev);
}

Variable context_aggregate(const Variable& sc, const MlrmVars& v, Mode mode) {
    std::vector<Variable> branches;
    branches.reserve(v.branch_conv.size());
    for (std::size_t i = 0; i < v.branch_conv.size(); ++i) {
        branches.push_back(relu(batchnorm(conv2d(sc, v.branch_conv[i]), v.branch_bn[i], mode)));
    }
    Variable stacked = concat(branches, 1);
    return add(sc, conv2d(stacked, v.fuse));
}

MlrmTrace mlrm_forward(const Variable& upper, const Variable& prev, const MlrmVars& v,
                       Mode mode) {
    MlrmTrace t;
    t.shortcut = shortcut_fuse(upper, prev);
    std::vector<Variable> branches;
    branches.reserve(v.branch_conv.size());
    for (std::size_t i = 0; i < v.branch_conv.size(); ++i) {
        t.branches[i] =
            relu(batchnorm(conv2d(t.shortcut, v.branch_conv[i]), v.branch_bn[i], mode));
        branches.push_back(t.branches[i]);
    }
    t.aggregated = conv2d(concat(branches, 1), v.fuse);
    t.output = add(t.shortcut, t.aggregated);
    return t;
}

}  // namespace hmvgg
