// Acceptance gate for the whole library: ten independent checks, one
// verdict line each, nonzero exit when anything fails. Each check builds
// its own fixtures from scratch so they can be read in isolation.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "hmvgg/checkpoint.hpp"
#include "hmvgg/data.hpp"
#include "hmvgg/gradcam.hpp"
#include "hmvgg/gradcheck_suite.hpp"
#include "hmvgg/metrics.hpp"
#include "hmvgg/rng.hpp"
#include "hmvgg/train.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace hmvgg;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

void require(bool ok, const std::string& what, std::string& firstFailure) {
    if (!ok && firstFailure.empty()) firstFailure = what;
}

fs::path fresh_dir(const std::string& tag) {
    auto dir = fs::temp_directory_path() / ("hmvgg_accept_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

Tensor randf(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

// 1. every differentiable operator beats 1e-4 relative error at probe
//    step 1e-3, inside two minutes
Outcome check_operator_gradients() {
    std::string fail;
    const auto t0 = std::chrono::steady_clock::now();
    const auto checks = run_op_gradchecks(7);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    double worst = 0.0;
    std::string worst_name = "none";
    require(!checks.empty(), "no operator checks ran", fail);
    for (const auto& c : checks) {
        if (c.max_rel_err > worst) {
            worst = c.max_rel_err;
            worst_name = c.name;
        }
        require(c.max_rel_err < c.threshold,
                c.name + " rel err " + fmt(c.max_rel_err) + " >= " + fmt(c.threshold), fail);
    }
    require(secs < 120.0, "suite took " + fmt(secs) + "s", fail);
    return {fail.empty(),
            fail.empty() ? std::to_string(checks.size()) + " ops, worst " + worst_name + " " +
                               fmt(worst)
                         : fail};
}

// 2. the composed network differentiates cleanly end to end on the small
//    preset with running-stat normalization
Outcome check_full_model_gradient() {
    std::string fail;
    const auto t0 = std::chrono::steady_clock::now();
    const auto checks = run_full_model_gradcheck(7);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    double worst = 0.0;
    bool saw_input = false;
    for (const auto& c : checks) {
        worst = std::max(worst, c.max_rel_err);
        if (c.name == "input") saw_input = true;
        require(c.max_rel_err < 1e-3,
                c.name + " rel err " + fmt(c.max_rel_err) + " >= 1e-3", fail);
    }
    require(saw_input, "input differentiation missing from the sweep", fail);
    require(secs < 120.0, "check took " + fmt(secs) + "s", fail);
    return {fail.empty(), fail.empty() ? "worst " + fmt(worst) + " over " +
                                             std::to_string(checks.size()) + " targets"
                                       : fail};
}

// 3. 200 random convolutions agree with the independent nested-loop
//    reference to 1e-10
Outcome check_convolution_oracle() {
    std::string fail;
    Rng rng(3);
    int cases = 0;
    double worst = 0.0;
    while (cases < 200) {
        const int k = rng.uniform_int(2) == 0 ? 1 : 3;
        const int dilation = 1 + static_cast<int>(rng.uniform_int(2));
        const int stride = 1 + static_cast<int>(rng.uniform_int(2));
        const int padding = static_cast<int>(rng.uniform_int(3));
        const std::int64_t h = 1 + rng.uniform_int(6), w = 1 + rng.uniform_int(6);
        if (h + 2 * padding < dilation * (k - 1) + 1) continue;
        if (w + 2 * padding < dilation * (k - 1) + 1) continue;
        const std::int64_t n = 1 + rng.uniform_int(2);
        const std::int64_t ci = 1 + rng.uniform_int(3), co = 1 + rng.uniform_int(3);
        Tensor x = randf(Shape{n, ci, h, w}, rng);
        ConvParams p = ConvParams::make(static_cast<int>(co), static_cast<int>(ci), k, stride,
                                        padding, dilation);
        for (std::int64_t i = 0; i < p.kernel.numel(); ++i) p.kernel[i] = rng.uniform(-1, 1);
        for (std::int64_t i = 0; i < p.bias.numel(); ++i) p.bias[i] = rng.uniform(-1, 1);
        Tensor got = conv2d(x, p);
        Tensor want = oracle::conv2d(x, p.kernel, p.bias, stride, padding, dilation);
        require(got.shape() == want.shape(),
                "shape mismatch " + got.shape().to_string() + " vs " + want.shape().to_string(),
                fail);
        for (std::int64_t i = 0; i < got.numel() && fail.empty(); ++i) {
            const double diff = std::abs(got[i] - want[i]);
            worst = std::max(worst, diff);
            require(diff < 1e-10, "case " + std::to_string(cases) + " diff " + fmt(diff), fail);
        }
        ++cases;
        if (!fail.empty()) break;
    }
    return {fail.empty(), fail.empty() ? "200 cases, worst abs diff " + fmt(worst) : fail};
}

// 4. attention gating: both gates strictly inside (0,1), output magnitude
//    strictly dominated by the input, input sign preserved
Outcome check_attention_invariants() {
    std::string fail;
    Rng rng(4);
    HamParams params = HamParams::make(8, 4);
    for (int trial = 0; trial < 100 && fail.empty(); ++trial) {
        if (trial % 10 == 0) {
            auto fill = [&rng](Tensor& t) {
                for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-0.8, 0.8);
            };
            fill(params.spatial.kernel);
            fill(params.spatial.bias);
            fill(params.fc1_weight);
            fill(params.fc1_bias);
            fill(params.fc2_weight);
            fill(params.fc2_bias);
        }
        const std::int64_t n = 1 + rng.uniform_int(2);
        const std::int64_t h = 2 + rng.uniform_int(4), w = 2 + rng.uniform_int(4);
        Tensor xv = randf(Shape{n, 8, h, w}, rng, -2.0, 2.0);
        xv[rng.uniform_int(xv.numel())] = 0.0;  // make sure the zero branch is exercised
        Tape tape;
        HamVars v = bind(tape, params, false);
        HamTrace trace = ham_forward(tape.leaf(xv), v);
        for (const Variable* gate : {&trace.spatial_gate, &trace.channel_gate}) {
            const Tensor& g = gate->value();
            for (std::int64_t i = 0; i < g.numel(); ++i) {
                require(g[i] > 0.0 && g[i] < 1.0, "gate value " + fmt(g[i]) + " escapes (0,1)",
                        fail);
            }
        }
        const Tensor& out = trace.output.value();
        for (std::int64_t i = 0; i < xv.numel(); ++i) {
            require(std::abs(out[i]) <= std::abs(xv[i]), "magnitude grew at " + std::to_string(i),
                    fail);
            if (xv[i] != 0.0) {
                require(std::abs(out[i]) < std::abs(xv[i]),
                        "magnitude not strictly damped at " + std::to_string(i), fail);
                require(out[i] * xv[i] > 0.0, "sign flipped at " + std::to_string(i), fail);
            } else {
                require(out[i] == 0.0, "zero input produced nonzero output", fail);
            }
        }
    }
    return {fail.empty(), fail.empty() ? "100 inputs, gates and damping hold" : fail};
}

// 5. residual fusion: zeroed aggregation reduces to exact addition, and
//    spatial extents survive every dilation branch
Outcome check_residual_floor() {
    std::string fail;
    Rng rng(5);
    MlrmParams params = MlrmParams::make(4);
    for (auto& conv : params.branch_conv) {
        for (std::int64_t i = 0; i < conv.kernel.numel(); ++i) {
            conv.kernel[i] = rng.uniform(-0.4, 0.4);
        }
    }
    // aggregation projection stays zero
    for (std::int64_t hw : {8, 14, 28}) {
        Tensor upper = randf(Shape{1, 4, hw, hw}, rng);
        Tensor prev = randf(Shape{1, 4, hw, hw}, rng);
        Tape tape;
        MlrmVars v = bind(tape, params, false);
        MlrmTrace trace = mlrm_forward(tape.leaf(upper), tape.leaf(prev), v, Mode::Eval);
        require(trace.output.shape() == (Shape{1, 4, hw, hw}),
                "output extents changed at " + std::to_string(hw), fail);
        for (std::size_t b = 0; b < 3; ++b) {
            require(trace.branches[b].shape() == (Shape{1, 4, hw, hw}),
                    "dilation " + std::to_string(MlrmParams::kDilations[b]) +
                        " branch changed extents",
                    fail);
        }
        const Tensor& out = trace.output.value();
        for (std::int64_t i = 0; i < out.numel(); ++i) {
            require(out[i] == upper[i] + prev[i], "residual floor broke at " + std::to_string(i),
                    fail);
        }
    }
    // live aggregation still preserves extents
    for (std::int64_t i = 0; i < params.fuse.kernel.numel(); ++i) {
        params.fuse.kernel[i] = rng.uniform(-0.4, 0.4);
    }
    Tape tape;
    MlrmVars v = bind(tape, params, false);
    MlrmTrace trace = mlrm_forward(tape.leaf(randf(Shape{2, 4, 8, 8}, rng)),
                                   tape.leaf(randf(Shape{2, 4, 8, 8}, rng)), v, Mode::Train);
    require(trace.output.shape() == (Shape{2, 4, 8, 8}), "live aggregation changed extents",
            fail);
    return {fail.empty(), fail.empty() ? "exact floor at 8/14/28, extents stable" : fail};
}

// 6. full-resolution geometry: the stage outputs land on 28/14/7 and the
//    head emits one score per class
Outcome check_shape_contract() {
    std::string fail;
    auto dir = fresh_dir("shape");
    SynthOptions opt;
    opt.seed = 1;
    opt.per_class = 1;
    opt.size = 224;
    synth_dataset(dir, opt);
    Manifest m = load_manifest(dir / "manifest.tsv");
    ModelConfig config;  // full-scale defaults
    Tensor input = preprocess({load_image(m.items[0].paths[0])}, config);
    require(input.shape() == (Shape{1, 3, 224, 224}), "preprocess shape off", fail);

    ModelParams params = ModelParams::make(config);
    init_params(params, 1);
    Tape tape;
    ModelVars v = bind_model(tape, params, false);
    ForwardTrace trace = model_forward(tape.leaf(input), v, Mode::Eval);
    require(trace.pyramid[0].shape() == (Shape{1, 256, 28, 28}),
            "stage 3 shape " + trace.pyramid[0].shape().to_string(), fail);
    require(trace.pyramid[1].shape() == (Shape{1, 512, 14, 14}),
            "stage 4 shape " + trace.pyramid[1].shape().to_string(), fail);
    require(trace.pyramid[2].shape() == (Shape{1, 512, 7, 7}),
            "stage 5 shape " + trace.pyramid[2].shape().to_string(), fail);
    require(trace.logits.shape() == (Shape{1, 3}),
            "logits shape " + trace.logits.shape().to_string(), fail);
    require(trace.logits.value().all_finite(), "logits not finite", fail);
    fs::remove_all(dir);
    return {fail.empty(), fail.empty() ? "28/14/7 pyramid, 3 logits" : fail};
}

// 7. the small preset learns the synthetic corpus: perfect training fit,
//    four of five held-out samples per class
Outcome check_learning_sanity() {
    std::string fail;
    auto train_dir = fresh_dir("learn_train");
    auto held_dir = fresh_dir("learn_held");
    SynthOptions train_opt;
    train_opt.seed = 7;
    train_opt.per_class = 10;
    SynthOptions held_opt;
    held_opt.seed = 1007;
    held_opt.per_class = 5;
    synth_dataset(train_dir, train_opt);
    synth_dataset(held_dir, held_opt);

    ModelConfig config = ModelConfig::desk();
    Dataset train_data = load_dataset(train_dir / "manifest.tsv", config);
    Dataset held_data = load_dataset(held_dir / "manifest.tsv", config);

    ModelParams params = ModelParams::make(config);
    init_params(params, 1);
    const auto history = train_loop(params, train_data, OptimConfig{}, 4, 160, 1);
    const double train_acc = history.back().train_accuracy;
    Metrics held = evaluate(params, held_data);
    require(train_acc == 1.0, "training accuracy peaked at " + fmt(train_acc), fail);
    require(held.accuracy >= 0.80, "held-out accuracy " + fmt(held.accuracy), fail);
    fs::remove_all(train_dir);
    fs::remove_all(held_dir);
    return {fail.empty(), fail.empty() ? "train 1.0, held-out " + fmt(held.accuracy) + " at 160 epochs"
                                       : fail};
}

// 8. the command-line trainer is bit-reproducible: same data, seed, and
//    config give identical checkpoint and history bytes
Outcome check_cli_determinism() {
    std::string fail;
    auto dir = fresh_dir("determinism");
    const std::string cli = HMVGG_CLI_PATH;
    auto run = [&](const std::string& args) {
        const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) && WEXITSTATUS(status) == 0;
    };
    std::ofstream(dir / "run.cfg") << "input_channels = 3\n"
                                      "input_h = 32\n"
                                      "input_w = 32\n"
                                      "widths = 4,8,16,32,32\n"
                                      "head_hidden = 8\n"
                                      "classes = 3\n"
                                      "optimizer = adam\n"
                                      "lr = 0.001\n"
                                      "batch_size = 4\n";
    require(run("synth --out " + (dir / "data").string() + " --seed 7 --per-class 4"),
            "synth failed", fail);
    const std::string base = "train --data " + (dir / "data" / "manifest.tsv").string() +
                             " --config " + (dir / "run.cfg").string() + " --seed 11 --epochs 6";
    require(run(base + " --out " + (dir / "a.ckpt").string()), "first train failed", fail);
    require(run(base + " --out " + (dir / "b.ckpt").string()), "second train failed", fail);
    if (fail.empty()) {
        const std::string ckpt_a = read_file(dir / "a.ckpt");
        const std::string ckpt_b = read_file(dir / "b.ckpt");
        require(!ckpt_a.empty() && ckpt_a == ckpt_b, "checkpoints differ", fail);
        const std::string hist_a = read_file(dir / "a.ckpt.history.tsv");
        const std::string hist_b = read_file(dir / "b.ckpt.history.tsv");
        require(!hist_a.empty() && hist_a == hist_b, "history files differ", fail);
    }
    fs::remove_all(dir);
    return {fail.empty(), fail.empty() ? "checkpoint and history bytes identical" : fail};
}

// 9. metric computation agrees exactly with a brute-force recount, and the
//    hand-worked three-class example comes out to the known values
Outcome check_metrics_oracle() {
    std::string fail;
    Rng rng(9);
    for (int trial = 0; trial < 500 && fail.empty(); ++trial) {
        const int classes = 2 + static_cast<int>(rng.uniform_int(5));
        const int n = 1 + static_cast<int>(rng.uniform_int(60));
        std::vector<int> truth(n), pred(n);
        for (int i = 0; i < n; ++i) {
            truth[i] = static_cast<int>(rng.uniform_int(classes));
            pred[i] = static_cast<int>(rng.uniform_int(classes));
        }
        Metrics got = compute_metrics(truth, pred, classes);
        oracle::MetricsRef want = oracle::metrics(truth, pred, classes);
        for (int a = 0; a < classes && fail.empty(); ++a) {
            for (int b = 0; b < classes; ++b) {
                require(got.confusion[a][b] == want.confusion[a][b],
                        "confusion cell mismatch in trial " + std::to_string(trial), fail);
            }
            require(got.precision[a] == want.precision[a] && got.recall[a] == want.recall[a] &&
                        got.f1[a] == want.f1[a],
                    "per-class score mismatch in trial " + std::to_string(trial), fail);
        }
        require(got.accuracy == want.accuracy, "accuracy mismatch", fail);
        require(std::abs(got.macro_f1 - want.macro_f1) < 1e-12, "macro f1 mismatch", fail);
    }

    std::vector<int> truth, pred;
    for (int i = 0; i < 5; ++i) {
        truth.push_back(0);
        pred.push_back(0);
        truth.push_back(1);
        pred.push_back(2);
        truth.push_back(2);
        pred.push_back(2);
    }
    Metrics m = compute_metrics(truth, pred, 3);
    require(std::abs(m.accuracy - 2.0 / 3.0) < 1e-12, "worked example accuracy", fail);
    require(m.precision[2] == 0.5 && m.recall[2] == 1.0, "worked example class 2 scores", fail);
    require(std::abs(m.f1[2] - 2.0 / 3.0) < 1e-12, "worked example class 2 f1", fail);
    require(std::abs(m.macro_f1 - 5.0 / 9.0) < 1e-12, "worked example macro f1", fail);
    return {fail.empty(), fail.empty() ? "500 trials exact plus worked example" : fail};
}

// 10. class activation maps: normalized range at input resolution, the
//     quadrant-driven logit lights up its own quadrant, detached layers
//     stay dark
Outcome check_heatmap_contract() {
    std::string fail;
    Rng rng(10);

    ModelConfig config = ModelConfig::desk();
    ModelParams params = ModelParams::make(config);
    init_params(params, 2);
    auto dir = fresh_dir("cam");
    SynthOptions opt;
    opt.seed = 2;
    opt.per_class = 1;
    synth_dataset(dir, opt);
    Manifest m = load_manifest(dir / "manifest.tsv");
    Tensor input = preprocess({load_image(m.items[0].paths[0])}, config);
    for (PyramidLevel level : {PyramidLevel::R3, PyramidLevel::R4}) {
        Tensor heat = gradcam(params, input, 1, level);
        require(heat.shape() == (Shape{1, 1, 32, 32}),
                "heatmap shape " + heat.shape().to_string(), fail);
        for (std::int64_t i = 0; i < heat.numel(); ++i) {
            require(heat[i] >= 0.0 && heat[i] <= 1.0, "heatmap value " + fmt(heat[i]), fail);
        }
    }
    fs::remove_all(dir);

    // crafted two-channel graph: the logit reads only the top-left quadrant
    // of channel 0, channel 1 glows everywhere else as a decoy
    {
        Tensor act(Shape{1, 2, 8, 8}, 0.0);
        Tensor mask(Shape{1, 2, 8, 8}, 0.0);
        for (std::int64_t y = 0; y < 8; ++y) {
            for (std::int64_t x = 0; x < 8; ++x) {
                const bool inside = y < 4 && x < 4;
                act.at({0, 0, y, x}) = inside ? rng.uniform(0.5, 1.0) : rng.uniform(0.0, 0.1);
                act.at({0, 1, y, x}) = inside ? rng.uniform(0.0, 0.1) : rng.uniform(0.5, 1.0);
                if (inside) mask.at({0, 0, y, x}) = 1.0;
            }
        }
        Tape tape;
        Variable a = tape.leaf(act, true);
        Variable logits = reshape(sum_all(mul(a, tape.leaf(mask))), Shape{1, 1});
        Tensor heat = gradcam_from_graph(tape, a, logits, 0, 16, 16);
        require(heat.shape() == (Shape{1, 1, 16, 16}), "crafted heatmap shape off", fail);
        std::int64_t peak = 0;
        for (std::int64_t i = 1; i < heat.numel(); ++i) {
            if (heat[i] > heat[peak]) peak = i;
        }
        const std::int64_t py = peak / 16, px = peak % 16;
        require(py < 8 && px < 8,
                "peak (" + std::to_string(py) + "," + std::to_string(px) +
                    ") escaped the sensitive quadrant",
                fail);
    }

    // a logit with no path to the activations leaves the map all zero
    {
        Tape tape;
        Variable a = tape.leaf(randf(Shape{1, 3, 6, 6}, rng), true);
        Variable other = tape.leaf(Tensor(Shape{1, 1}, 0.7), true);
        Variable logits = mul(other, other);
        Tensor heat = gradcam_from_graph(tape, a, logits, 0, 6, 6);
        for (std::int64_t i = 0; i < heat.numel(); ++i) {
            require(heat[i] == 0.0, "detached activations produced heat", fail);
        }
    }
    return {fail.empty(),
            fail.empty() ? "range, resolution, quadrant, and zero-path all hold" : fail};
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<Outcome()> fn;
    };
    const std::vector<Criterion> criteria{
        {"operator gradient suite under 1e-4", check_operator_gradients},
        {"end-to-end gradient under 1e-3", check_full_model_gradient},
        {"convolution matches nested-loop reference", check_convolution_oracle},
        {"attention gate invariants", check_attention_invariants},
        {"residual fusion floor and extents", check_residual_floor},
        {"full-resolution shape contract", check_shape_contract},
        {"learning run on the synthetic corpus", check_learning_sanity},
        {"bit-identical repeat training via the CLI", check_cli_determinism},
        {"metrics match brute-force recount", check_metrics_oracle},
        {"activation heatmap contract", check_heatmap_contract},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome r;
        try {
            r = criteria[i].fn();
        } catch (const std::exception& e) {
            r = {false, std::string("exception: ") + e.what()};
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%s] %2zu. %s: %s (%.1fs)\n", r.pass ? "PASS" : "FAIL", i + 1,
                    criteria[i].name, r.detail.c_str(), secs);
        std::fflush(stdout);
        if (!r.pass) ++failures;
    }
    if (failures > 0) {
        std::printf("%d of %zu checks failed\n", failures, criteria.size());
        return 1;
    }
    std::printf("all %zu checks passed\n", criteria.size());
    return 0;
}
