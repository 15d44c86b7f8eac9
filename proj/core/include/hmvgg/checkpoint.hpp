#pragma once

#include <filesystem>

#include "hmvgg/model.hpp"

namespace hmvgg {

// Binary snapshot of a model: "HMVK", u32 version, length-prefixed config
// text, then every tensor in for_each_param order.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace hmvgg
