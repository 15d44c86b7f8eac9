#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "hmvgg/checkpoint.hpp"
#include "hmvgg/model.hpp"
#include "hmvgg/rng.hpp"

using namespace hmvgg;

namespace {

Tensor randf(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST(ModelConfig, ValidationRules) {
    ModelConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_NO_THROW(ModelConfig::desk().validate());

    ModelConfig bad = c;
    bad.input_h = 100;  // not a multiple of 32
    EXPECT_THROW(bad.validate(), ShapeError);
    bad = c;
    bad.classes = 1;
    EXPECT_THROW(bad.validate(), ShapeError);
    bad = c;
    bad.input_channels = 0;
    EXPECT_THROW(bad.validate(), ShapeError);
}

TEST(ModelConfig, TextRoundTrip) {
    ModelConfig c = ModelConfig::desk();
    c.classes = 5;
    c.ham_reduction = 8;
    ModelConfig back = ModelConfig::from_text(c.to_text());
    EXPECT_EQ(back.input_h, c.input_h);
    EXPECT_EQ(back.widths, c.widths);
    EXPECT_EQ(back.classes, 5);
    EXPECT_EQ(back.ham_reduction, 8);
}

TEST(ModelConfig, RejectsMalformedText) {
    EXPECT_THROW(ModelConfig::from_text("nonsense_key = 3"), ParseError);
    EXPECT_THROW(ModelConfig::from_text("widths = 1,2,3"), ParseError);
    EXPECT_THROW(ModelConfig::from_text("input_h = soon"), ParseError);
    ModelConfig c;
    EXPECT_FALSE(apply_config_entry(c, "learning_rate", "0.1"));
    EXPECT_TRUE(apply_config_entry(c, "head_hidden", "12"));
    EXPECT_EQ(c.head_hidden, 12);
}

TEST(ModelParams, HeadAndLateralShapes) {
    ModelConfig c = ModelConfig::desk();
    ModelParams p = ModelParams::make(c);
    const int fused = c.widths[4];
    EXPECT_EQ(p.head1_weight.shape(), (Shape{c.head_hidden, fused}));
    EXPECT_EQ(p.head2_weight.shape(), (Shape{c.classes, c.head_hidden}));
    EXPECT_EQ(p.lateral4.conv.kernel.shape(), (Shape{c.widths[4], c.widths[3], 3, 3}));
    EXPECT_EQ(p.lateral3_a.conv.kernel.shape(), (Shape{c.widths[4], c.widths[2], 3, 3}));
    EXPECT_EQ(p.lateral3_b.conv.kernel.shape(), (Shape{c.widths[4], c.widths[4], 3, 3}));
    EXPECT_EQ(p.global_proj.kernel.shape(), (Shape{c.widths[4], c.widths[4], 1, 1}));
    EXPECT_EQ(p.blocks[0].size(), 2u);
    EXPECT_EQ(p.blocks[2].size(), 3u);
    EXPECT_EQ(p.blocks[4].size(), 3u);
}

TEST(InitParams, DeterministicPerSeed) {
    ModelParams a = ModelParams::make(ModelConfig::desk());
    ModelParams b = ModelParams::make(ModelConfig::desk());
    ModelParams c = ModelParams::make(ModelConfig::desk());
    init_params(a, 42);
    init_params(b, 42);
    init_params(c, 43);
    bool all_equal = true;
    bool any_differs = false;
    for_each_param(a, [&](const std::string& name, Tensor& ta) {
        for_each_param(b, [&](const std::string& nb, Tensor& tb) {
            if (nb != name) return;
            for (std::int64_t i = 0; i < ta.numel(); ++i) {
                if (ta[i] != tb[i]) all_equal = false;
            }
        });
        for_each_param(c, [&](const std::string& nc, Tensor& tc) {
            if (nc != name) return;
            for (std::int64_t i = 0; i < ta.numel(); ++i) {
                if (ta[i] != tc[i]) any_differs = true;
            }
        });
    });
    EXPECT_TRUE(all_equal);
    EXPECT_TRUE(any_differs);
}

TEST(InitParams, WeightsCenteredBiasesZero) {
    // On a >10k element kernel the sample mean sits within three standard
    // errors of zero for a centered uniform draw.
    ModelParams p = ModelParams::make(ModelConfig());
    init_params(p, 7);
    const Tensor& k = p.blocks[1][0].conv.kernel;  // 128 x 64 x 3 x 3
    ASSERT_GT(k.numel(), 10000);
    const std::int64_t fan_in = 64 * 3 * 3;
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    double mean = 0.0;
    for (std::int64_t i = 0; i < k.numel(); ++i) {
        EXPECT_LE(std::abs(k[i]), bound);
        mean += k[i];
    }
    mean /= static_cast<double>(k.numel());
    const double stderr3 = 3.0 * bound / std::sqrt(3.0 * static_cast<double>(k.numel()));
    EXPECT_LT(std::abs(mean), stderr3);

    for (std::int64_t i = 0; i < p.blocks[1][0].conv.bias.numel(); ++i) {
        EXPECT_DOUBLE_EQ(p.blocks[1][0].conv.bias[i], 0.0);
    }
    for (std::int64_t i = 0; i < p.blocks[1][0].bn.gamma.numel(); ++i) {
        EXPECT_DOUBLE_EQ(p.blocks[1][0].bn.gamma[i], 1.0);
        EXPECT_DOUBLE_EQ(p.blocks[1][0].bn.beta[i], 0.0);
    }
}

TEST(Forward, DeskPyramidAndLogitShapes) {
    ModelConfig c = ModelConfig::desk();
    ModelParams p = ModelParams::make(c);
    init_params(p, 1);
    Tape tape;
    ModelVars v = bind_model(tape, p, false);
    Variable x = tape.leaf(randf(Shape{2, 3, 32, 32}, 2));
    ForwardTrace trace = model_forward(x, v, Mode::Eval);
    EXPECT_EQ(trace.pyramid[0].shape(), (Shape{2, 16, 4, 4}));
    EXPECT_EQ(trace.pyramid[1].shape(), (Shape{2, 32, 2, 2}));
    EXPECT_EQ(trace.pyramid[2].shape(), (Shape{2, 32, 1, 1}));
    EXPECT_EQ(trace.fuse1.output.shape(), (Shape{2, 32, 2, 2}));
    EXPECT_EQ(trace.fuse2.output.shape(), (Shape{2, 32, 4, 4}));
    EXPECT_EQ(trace.head_input.shape(), (Shape{2, 32}));
    EXPECT_EQ(trace.logits.shape(), (Shape{2, 3}));
    EXPECT_TRUE(trace.logits.value().all_finite());
}

TEST(Forward, ShapeContractScalesWithInput) {
    ModelConfig c = ModelConfig::desk();
    c.input_h = 64;
    c.input_w = 96;
    ModelParams p = ModelParams::make(c);
    init_params(p, 3);
    Tape tape;
    ModelVars v = bind_model(tape, p, false);
    ForwardTrace trace = model_forward(tape.leaf(randf(Shape{1, 3, 64, 96}, 4)), v, Mode::Eval);
    EXPECT_EQ(trace.pyramid[0].shape(), (Shape{1, 16, 8, 12}));
    EXPECT_EQ(trace.pyramid[1].shape(), (Shape{1, 32, 4, 6}));
    EXPECT_EQ(trace.pyramid[2].shape(), (Shape{1, 32, 2, 3}));
    EXPECT_EQ(trace.logits.shape(), (Shape{1, 3}));
}

TEST(Forward, EvalIsPure) {
    ModelConfig c = ModelConfig::desk();
    ModelParams p = ModelParams::make(c);
    init_params(p, 5);
    Tensor input = randf(Shape{1, 3, 32, 32}, 6);
    Tensor a = predict_logits(p, input);
    Tensor b = predict_logits(p, input);
    ASSERT_EQ(a.shape(), b.shape());
    for (std::int64_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Forward, InputShapeValidated) {
    ModelParams p = ModelParams::make(ModelConfig::desk());
    init_params(p, 7);
    EXPECT_THROW(predict_logits(p, randf(Shape{1, 3, 16, 16}, 8)), ShapeError);
    EXPECT_THROW(predict_logits(p, randf(Shape{1, 1, 32, 32}, 9)), ShapeError);
}

TEST(Checkpoint, RoundTripReproducesLogits) {
    const auto path = temp_file("hmvgg_ckpt_rt.bin");
    ModelConfig c = ModelConfig::desk();
    ModelParams p = ModelParams::make(c);
    init_params(p, 11);
    Tensor input = randf(Shape{1, 3, 32, 32}, 12);
    Tensor before = predict_logits(p, input);
    save_checkpoint(path, p);
    ModelParams q = load_checkpoint(path);
    EXPECT_EQ(q.config.input_h, c.input_h);
    EXPECT_EQ(q.config.widths, c.widths);
    Tensor after = predict_logits(q, input);
    for (std::int64_t i = 0; i < before.numel(); ++i) EXPECT_EQ(before[i], after[i]);
    std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsCorruptFiles) {
    const auto path = temp_file("hmvgg_ckpt_bad.bin");
    {
        std::ofstream out(path, std::ios::binary);
        out << "HMVKjunk that is not a checkpoint";
    }
    EXPECT_THROW(load_checkpoint(path), ParseError);
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOPE";
    }
    EXPECT_THROW(load_checkpoint(path), ParseError);
    std::filesystem::remove(path);
    EXPECT_THROW(load_checkpoint(path), IoError);
}

TEST(Checkpoint, TruncationDetected) {
    const auto path = temp_file("hmvgg_ckpt_trunc.bin");
    ModelParams p = ModelParams::make(ModelConfig::desk());
    init_params(p, 13);
    save_checkpoint(path, p);
    const auto full = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, full - 16);
    EXPECT_THROW(load_checkpoint(path), ParseError);
    std::filesystem::remove(path);
}

TEST(ForEachParam, StableNamesAndCoverage) {
    ModelParams p = ModelParams::make(ModelConfig::desk());
    std::vector<std::string> names;
    for_each_param(p, [&](const std::string& name, Tensor&) { names.push_back(name); });
    // 13 conv+bn layers in the backbone plus 3 lateral blocks, 6 tensors each;
    // 3 attention modules, 6 each; 2 fusion modules, 20 each; projection + head
    EXPECT_EQ(names.size(), 16u * 6u + 3u * 6u + 2u * 20u + 6u);
    EXPECT_EQ(names.front(), "block1.layer1.kernel");
    EXPECT_EQ(names.back(), "head2.bias");
    // names are unique
    auto sorted = names;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_TRUE(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
}
