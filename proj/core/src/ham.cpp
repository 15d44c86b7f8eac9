#include "hmvgg/ham.hpp"

#include <algorithm>

namespace hmvgg {

HamParams HamParams::make(int channels, int reduction) {
    if (channels < 1 || reduction < 1) {
        throw ShapeError("hybrid attention needs positive channels and reduction");
    }
    HamParams p;
    p.channels = channels;
    p.hidden = std::max(channels / reduction, 4);
    p.spatial = ConvParams::make(1, channels, 1);
    p.fc1_weight = Tensor(Shape{p.hidden, channels});
    p.fc1_bias = Tensor(Shape{p.hidden});
    p.fc2_weight = Tensor(Shape{channels, p.hidden});
    p.fc2_bias = Tensor(Shape{channels});
    return p;
}

HamVars bind(Tape& tape, HamParams& p, bool requires_grad, ParamSlots* slots) {
    HamVars v;
    v.spatial = bind(tape, p.spatial, requires_grad, slots);
    auto leaf = [&](Tensor& t) {
        Variable var = tape.leaf(t, requires_grad);
        if (slots) slots->push_back(ParamSlot{&t, var});
        return var;
    };
    v.fc1_weight = leaf(p.fc1_weight);
    v.fc1_bias = leaf(p.fc1_bias);
    v.fc2_weight = leaf(p.fc2_weight);
    v.fc2_bias = leaf(p.fc2_bias);
    return v;
}

HamTrace ham_forward(const Variable& x, const HamVars& v) {
    const Shape& s = x.shape();
    if (s.rank() != 4) {
        throw ShapeError("hybrid attention expects N x C x H x W input, got " + s.to_string());
    }
    const std::int64_t n = s.extent(0), c = s.extent(1);

    HamTrace t;
    t.spatial_gate = sigmoid(conv2d(x, v.spatial));
    t.spatial_out = mul(x, t.spatial_gate);

    t.pooled = gap(x);
    Variable flat = reshape(t.pooled, Shape{n, c});
    Variable hidden = relu(fc(flat, v.fc1_weight, v.fc1_bias));
    Variable gate = sigmoid(fc(hidden, v.fc2_weight, v.fc2_bias));
    t.channel_gate = reshape(gate, Shape{n, c, 1, 1});
    t.channel_out = mul(x, t.channel_gate);

    t.output = mul(x, sigmoid(add(t.spatial_out, t.channel_out)));
    return t;
}

}  // namespace hmvgg
