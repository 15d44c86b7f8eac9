#include "hmvgg/train.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>

#include "hmvgg/kv.hpp"
#include "hmvgg/rng.hpp"

namespace hmvgg {

RunConfig parse_run_config(const std::string& text) {
    RunConfig rc;
    for (const auto& [key, value] : parse_kv_text(text)) {
        if (apply_config_entry(rc.model, key, value)) continue;
        if (apply_optim_entry(rc.optim, key, value)) continue;
        if (key == "batch_size") {
            rc.batch_size = static_cast<int>(parse_i64(value, "batch_size"));
            continue;
        }
        throw ParseError("unknown config key '" + key + "'");
    }
    rc.model.validate();
    if (rc.batch_size < 1) throw ParseError("batch_size must be positive");
    return rc;
}

namespace {

void check_dataset(const ModelConfig& config, const Dataset& data) {
    if (data.samples.empty()) throw ShapeError("dataset is empty");
    const Shape expected{1, config.input_channels, config.input_h, config.input_w};
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        const Sample& s = data.samples[i];
        if (s.input.shape() != expected) {
            throw ShapeError("sample " + std::to_string(i) + " has shape " +
                             s.input.shape().to_string() + ", model expects " +
                             expected.to_string());
        }
        if (s.label < 0 || s.label >= config.classes) {
            throw ShapeError("sample " + std::to_string(i) + " label " +
                             std::to_string(s.label) + " out of range for " +
                             std::to_string(config.classes) + " classes");
        }
    }
}

Tensor stack_batch(const Dataset& data, const std::vector<std::size_t>& order, std::size_t begin,
                   std::size_t count) {
    const Shape& one = data.samples[order[begin]].input.shape();
    Tensor batch(Shape{static_cast<std::int64_t>(count), one.extent(1), one.extent(2),
                       one.extent(3)});
    const std::int64_t stride = one.numel();
    for (std::size_t b = 0; b < count; ++b) {
        const Tensor& src = data.samples[order[begin + b]].input;
        double* dst = batch.data() + static_cast<std::int64_t>(b) * stride;
        for (std::int64_t i = 0; i < stride; ++i) dst[i] = src[i];
    }
    return batch;
}

}  // namespace

int argmax_class(const Tensor& logits, std::int64_t row) {
    const std::int64_t k = logits.extent(1);
    int best = 0;
    double bv = logits[row * k];
    for (std::int64_t j = 1; j < k; ++j) {
        if (logits[row * k + j] > bv) {
            bv = logits[row * k + j];
            best = static_cast<int>(j);
        }
    }
    return best;
}

std::vector<EpochStats> train_loop(ModelParams& params, const Dataset& data,
                                   const OptimConfig& optim, int batch_size, int epochs,
                                   std::uint64_t seed) {
    check_dataset(params.config, data);
    const std::size_t n = data.samples.size();
    if (batch_size < 1) throw ShapeError("batch size must be positive");
    if (static_cast<std::size_t>(batch_size) > n) {
        throw ShapeError("batch size " + std::to_string(batch_size) + " exceeds dataset of " +
                         std::to_string(n) + " samples");
    }
    if (epochs < 1) throw ShapeError("epochs must be positive");

    Optimizer opt(optim);
    bool registered = false;
    Rng rng(seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::vector<EpochStats> history;
    history.reserve(static_cast<std::size_t>(epochs));
    for (int epoch = 1; epoch <= epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::int64_t correct = 0;
        for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(batch_size)) {
            const std::size_t count =
                std::min(static_cast<std::size_t>(batch_size), n - begin);
            Tensor batch = stack_batch(data, order, begin, count);
            std::vector<int> labels(count);
            for (std::size_t b = 0; b < count; ++b) {
                labels[b] = data.samples[order[begin + b]].label;
            }

            Tape tape;
            ParamSlots slots;
            ModelVars vars = bind_model(tape, params, true, &slots);
            if (!registered) {
                std::vector<Tensor*> ptrs;
                ptrs.reserve(slots.size());
                for (const ParamSlot& s : slots) ptrs.push_back(s.param);
                opt.register_params(std::move(ptrs));
                registered = true;
            }
            Variable x = tape.leaf(batch);
            ForwardTrace trace = model_forward(x, vars, Mode::Train);
            Variable loss = softmax_ce(trace.logits, labels);
            loss_sum += loss.value().item() * static_cast<double>(count);
            for (std::size_t b = 0; b < count; ++b) {
                if (argmax_class(trace.logits.value(), static_cast<std::int64_t>(b)) ==
                    labels[b]) {
                    ++correct;
                }
            }

            GradientMap grads = backward(tape, loss);
            std::vector<Tensor> grad_list;
            grad_list.reserve(slots.size());
            for (const ParamSlot& s : slots) grad_list.push_back(grads.grad(s.var));
            opt.step(grad_list);
        }
        EpochStats stats;
        stats.epoch = epoch;
        stats.loss = loss_sum / static_cast<double>(n);
        stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
        history.push_back(stats);
    }
    return history;
}

void write_history(const std::filesystem::path& path, const std::vector<EpochStats>& history) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "epoch\tloss\ttrain_accuracy\n";
    char line[128];
    for (const EpochStats& e : history) {
        std::snprintf(line, sizeof(line), "%d\t%.6f\t%.6f\n", e.epoch, e.loss,
                      e.train_accuracy);
        out << line;
    }
    if (!out) throw IoError("write to " + path.string() + " failed");
}

Metrics evaluate(ModelParams& params, const Dataset& data) {
    check_dataset(params.config, data);
    std::vector<int> truth, predicted;
    truth.reserve(data.samples.size());
    predicted.reserve(data.samples.size());
    for (const Sample& s : data.samples) {
        const Tensor logits = predict_logits(params, s.input);
        truth.push_back(s.label);
        predicted.push_back(argmax_class(logits, 0));
    }
    return compute_metrics(truth, predicted, params.config.classes);
}

}  // namespace hmvgg
