#pragma once

#include <filesystem>

#include "hmvgg/data.hpp"
#include "hmvgg/metrics.hpp"
#include "hmvgg/model.hpp"
#include "hmvgg/optim.hpp"

namespace hmvgg {

// Text settings covering the model, the optimizer, and batching.
struct RunConfig {
    ModelConfig model;
    OptimConfig optim;
    int batch_size = 4;
};

// Parses "key = value" lines; any unrecognized key is an error.
RunConfig parse_run_config(const std::string& text);

struct EpochStats {
    int epoch = 0;             // 1-based
    double loss = 0.0;         // sample-weighted mean over the epoch
    double train_accuracy = 0.0;
};

// Shuffles with the given seed each epoch, steps the optimizer per batch,
// and reports per-epoch loss and accuracy from the training passes.
std::vector<EpochStats> train_loop(ModelParams& params, const Dataset& data,
                                   const OptimConfig& optim, int batch_size, int epochs,
                                   std::uint64_t seed);

// One row per epoch: "epoch<TAB>loss<TAB>train_accuracy".
void write_history(const std::filesystem::path& path, const std::vector<EpochStats>& history);

// Eval-mode pass over every sample; predictions take the first maximal logit.
Metrics evaluate(ModelParams& params, const Dataset& data);

int argmax_class(const Tensor& logits, std::int64_t row);

}  // namespace hmvgg
