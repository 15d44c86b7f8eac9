#pragma once

#include "hmvgg/model.hpp"

namespace hmvgg {

enum class PyramidLevel { R3, R4, R5 };

// Class activation map from an already recorded graph. Backpropagates the
// chosen logit to the activation map, weights each channel by the spatial
// mean of its gradient, rectifies the weighted sum, scales it up to
// out_h x out_w with nearest-neighbor sampling, and normalizes to [0, 1].
// A map with no dynamic range (for instance when the logit does not depend
// on the activations) comes back all zero. Returns a 1 x 1 x out_h x out_w
// tensor.
Tensor gradcam_from_graph(Tape& tape, const Variable& activations, const Variable& logits,
                          int target_class, std::int64_t out_h, std::int64_t out_w);

// End-to-end map for one preprocessed image [1 x C x H x W] at input resolution.
Tensor gradcam(ModelParams& params, const Tensor& input, int target_class,
               PyramidLevel level = PyramidLevel::R5);

}  // namespace hmvgg
