#include <benchmark/benchmark.h>

#include "hmvgg/ham.hpp"
#include "hmvgg/mlrm.hpp"
#include "hmvgg/model.hpp"
#include "hmvgg/nnops.hpp"
#include "hmvgg/rng.hpp"
#include "hmvgg/train.hpp"

using namespace hmvgg;

namespace {

Tensor randf(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    return t;
}

void fill(Tensor& t, Rng& rng) {
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-0.5, 0.5);
}

}  // namespace

static void BM_Conv2d3x3(benchmark::State& state) {
    Rng rng(1);
    const std::int64_t c = state.range(0), hw = state.range(1);
    Tensor x = randf(Shape{1, c, hw, hw}, rng);
    ConvParams p = ConvParams::make(static_cast<int>(c), static_cast<int>(c), 3, 1, 1);
    fill(p.kernel, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(conv2d(x, p));
    }
    state.SetItemsProcessed(state.iterations() * c * c * 9 * hw * hw);
}
BENCHMARK(BM_Conv2d3x3)->Args({16, 32})->Args({64, 56})->Args({256, 28});

static void BM_Conv2dDilated(benchmark::State& state) {
    Rng rng(2);
    const std::int64_t c = state.range(0), hw = state.range(1);
    const int dilation = static_cast<int>(state.range(2));
    Tensor x = randf(Shape{1, c, hw, hw}, rng);
    ConvParams p = ConvParams::make(static_cast<int>(c), static_cast<int>(c), 3, 1, dilation,
                                    dilation);
    fill(p.kernel, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(conv2d(x, p));
    }
}
BENCHMARK(BM_Conv2dDilated)->Args({32, 28, 2})->Args({32, 28, 4});

static void BM_HamForward(benchmark::State& state) {
    Rng rng(3);
    const std::int64_t c = state.range(0), hw = state.range(1);
    HamParams params = HamParams::make(static_cast<int>(c));
    fill(params.spatial.kernel, rng);
    fill(params.fc1_weight, rng);
    fill(params.fc2_weight, rng);
    Tensor x = randf(Shape{1, c, hw, hw}, rng);
    for (auto _ : state) {
        Tape tape;
        HamVars v = bind(tape, params, false);
        benchmark::DoNotOptimize(ham_forward(tape.leaf(x), v).output.value());
    }
}
BENCHMARK(BM_HamForward)->Args({256, 28})->Args({512, 14});

static void BM_MlrmForward(benchmark::State& state) {
    Rng rng(4);
    const std::int64_t c = state.range(0), hw = state.range(1);
    MlrmParams params = MlrmParams::make(static_cast<int>(c));
    for (auto& conv : params.branch_conv) fill(conv.kernel, rng);
    fill(params.fuse.kernel, rng);
    Tensor upper = randf(Shape{1, c, hw, hw}, rng);
    Tensor prev = randf(Shape{1, c, hw, hw}, rng);
    for (auto _ : state) {
        Tape tape;
        MlrmVars v = bind(tape, params, false);
        benchmark::DoNotOptimize(
            mlrm_forward(tape.leaf(upper), tape.leaf(prev), v, Mode::Eval).output.value());
    }
}
BENCHMARK(BM_MlrmForward)->Args({32, 14})->Args({64, 14});

static void BM_DeskForward(benchmark::State& state) {
    Rng rng(5);
    ModelParams params = ModelParams::make(ModelConfig::desk());
    init_params(params, 1);
    Tensor x = randf(Shape{1, 3, 32, 32}, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(predict_logits(params, x));
    }
}
BENCHMARK(BM_DeskForward);

static void BM_DeskTrainStep(benchmark::State& state) {
    Rng rng(6);
    ModelConfig config = ModelConfig::desk();
    ModelParams params = ModelParams::make(config);
    init_params(params, 1);
    Tensor batch = randf(Shape{4, 3, 32, 32}, rng);
    const std::vector<int> labels{0, 1, 2, 0};
    OptimConfig oc;
    Optimizer opt(oc);
    bool registered = false;
    for (auto _ : state) {
        Tape tape;
        ParamSlots slots;
        ModelVars v = bind_model(tape, params, true, &slots);
        if (!registered) {
            std::vector<Tensor*> ptrs;
            for (const auto& s : slots) ptrs.push_back(s.param);
            opt.register_params(std::move(ptrs));
            registered = true;
        }
        ForwardTrace trace = model_forward(tape.leaf(batch), v, Mode::Train);
        Variable loss = softmax_ce(trace.logits, labels);
        GradientMap grads = backward(tape, loss);
        std::vector<Tensor> gs;
        gs.reserve(slots.size());
        for (const auto& s : slots) gs.push_back(grads.grad(s.var));
        opt.step(gs);
        benchmark::DoNotOptimize(loss.value().item());
    }
}
BENCHMARK(BM_DeskTrainStep);

BENCHMARK_MAIN();
