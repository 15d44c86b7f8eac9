#include "hmvgg/gradcam.hpp"

#include <algorithm>

namespace hmvgg {

Tensor gradcam_from_graph(Tape& tape, const Variable& activations, const Variable& logits,
                          int target_class, std::int64_t out_h, std::int64_t out_w) {
    const Shape ls = logits.shape();
    if (ls.rank() != 2 || ls.extent(0) != 1) {
        throw ShapeError("class activation map needs logits for a single sample, got " +
                         ls.to_string());
    }
    if (target_class < 0 || target_class >= ls.extent(1)) {
        throw ShapeError("target class " + std::to_string(target_class) + " out of range [0, " +
                         std::to_string(ls.extent(1)) + ")");
    }
    // Copy, not reference: appending the mask leaf below may grow the tape's
    // node storage and would invalidate a view into it.
    const Shape as = activations.shape();
    if (as.rank() != 4 || as.extent(0) != 1) {
        throw ShapeError("activation map must be 1 x C x H x W, got " + as.to_string());
    }

    Tensor mask(ls, 0.0);
    mask[target_class] = 1.0;
    Variable selected = sum_all(mul(logits, tape.leaf(std::move(mask))));
    GradientMap grads = backward(tape, selected);
    const Tensor da = grads.grad(activations);

    const std::int64_t c = as.extent(1), h = as.extent(2), w = as.extent(3);
    const std::int64_t hw = h * w;
    const Tensor& a = activations.value();
    Tensor cam(Shape{1, 1, h, w}, 0.0);
    for (std::int64_t ch = 0; ch < c; ++ch) {
        double alpha = 0.0;
        for (std::int64_t i = 0; i < hw; ++i) alpha += da[ch * hw + i];
        alpha /= static_cast<double>(hw);
        for (std::int64_t i = 0; i < hw; ++i) cam[i] += alpha * a[ch * hw + i];
    }
    for (std::int64_t i = 0; i < hw; ++i) cam[i] = std::max(cam[i], 0.0);

    Tensor up = upsample_nearest(cam, out_h, out_w);
    double lo = up[0], hi = up[0];
    for (std::int64_t i = 0; i < up.numel(); ++i) {
        lo = std::min(lo, up[i]);
        hi = std::max(hi, up[i]);
    }
    std::vector<double> flat(static_cast<std::size_t>(up.numel()), 0.0);
    if (hi > lo) {
        for (std::int64_t i = 0; i < up.numel(); ++i) {
            flat[static_cast<std::size_t>(i)] = (up[i] - lo) / (hi - lo);
        }
    }
    return Tensor::from_data(Shape{1, 1, out_h, out_w}, std::move(flat));
}

Tensor gradcam(ModelParams& params, const Tensor& input, int target_class, PyramidLevel level) {
    if (input.rank() != 4 || input.extent(0) != 1) {
        throw ShapeError("class activation map expects a single image, got " +
                         input.shape().to_string());
    }
    Tape tape;
    // Gradients flow from the input leaf so the pyramid stays differentiable
    // without touching the weights.
    ModelVars v = bind_model(tape, params, false);
    Variable x = tape.leaf(input, true);
    ForwardTrace trace = model_forward(x, v, Mode::Eval);
    const Variable& acts = trace.pyramid[static_cast<std::size_t>(level)];
    return gradcam_from_graph(tape, acts, trace.logits, target_class, params.config.input_h,
                              params.config.input_w);
}

}  // namespace hmvgg
