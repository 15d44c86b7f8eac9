#pragma once

#include <array>
#include <string>
#include <vector>

#include "hmvgg/autograd.hpp"
#include "hmvgg/ham.hpp"
#include "hmvgg/mlrm.hpp"
#include "hmvgg/nnops.hpp"

namespace hmvgg {

struct ModelConfig {
    int input_channels = 3;
    std::int64_t input_h = 224;
    std::int64_t input_w = 224;
    std::array<int, 5> widths{64, 128, 256, 512, 512};
    int head_hidden = 64;
    int classes = 3;
    int ham_reduction = 16;

    // Small configuration for fast tests and experiments.
    static ModelConfig desk();

    void validate() const;
    std::string to_text() const;
    static ModelConfig from_text(const std::string& text);
};

// Applies one "key = value" setting; returns false when the key is not a model key.
bool apply_config_entry(ModelConfig& config, const std::string& key, const std::string& value);

struct ConvBnParams {
    ConvParams conv;
    BatchNormState bn;

    static ConvBnParams make(int out_channels, int in_channels, int kernel_size, int padding);
};

struct ModelParams {
    ModelConfig config;
    // Stage i has 2 conv+bn layers for i < 2, else 3; each stage ends in a 2x2 maxpool.
    std::array<std::vector<ConvBnParams>, 5> blocks;
    std::array<HamParams, 3> ham;  // attention over stages 3, 4, 5
    ConvBnParams lateral4;         // widths[3] -> widths[4]
    ConvBnParams lateral3_a;       // widths[2] -> widths[4]
    ConvBnParams lateral3_b;       // widths[4] -> widths[4]
    MlrmParams fuse1, fuse2;
    ConvParams global_proj;        // 1x1 on pooled stage-5 features
    Tensor head1_weight, head1_bias;
    Tensor head2_weight, head2_bias;

    static ModelParams make(const ModelConfig& config);
};

// Random weight initialization; biases stay zero and batchnorm stays identity.
void init_params(ModelParams& params, std::uint64_t seed);

// Visits every persistent tensor in a fixed order (the checkpoint order).
template <typename Params, typename Fn>
void for_each_param(Params& p, Fn&& fn) {
    auto conv_bn = [&fn](const std::string& prefix, auto& cb) {
        fn(prefix + ".kernel", cb.conv.kernel);
        fn(prefix + ".bias", cb.conv.bias);
        fn(prefix + ".gamma", cb.bn.gamma);
        fn(prefix + ".beta", cb.bn.beta);
        fn(prefix + ".running_mean", cb.bn.running_mean);
        fn(prefix + ".running_var", cb.bn.running_var);
    };
    for (std::size_t b = 0; b < p.blocks.size(); ++b) {
        for (std::size_t l = 0; l < p.blocks[b].size(); ++l) {
            conv_bn("block" + std::to_string(b + 1) + ".layer" + std::to_string(l + 1),
                    p.blocks[b][l]);
        }
    }
    for (std::size_t i = 0; i < p.ham.size(); ++i) {
        const std::string prefix = "ham" + std::to_string(i + 3);
        fn(prefix + ".spatial.kernel", p.ham[i].spatial.kernel);
        fn(prefix + ".spatial.bias", p.ham[i].spatial.bias);
        fn(prefix + ".fc1.weight", p.ham[i].fc1_weight);
        fn(prefix + ".fc1.bias", p.ham[i].fc1_bias);
        fn(prefix + ".fc2.weight", p.ham[i].fc2_weight);
        fn(prefix + ".fc2.bias", p.ham[i].fc2_bias);
    }
    conv_bn("lateral4", p.lateral4);
    conv_bn("lateral3_a", p.lateral3_a);
    conv_bn("lateral3_b", p.lateral3_b);
    auto mlrm = [&](const std::string& prefix, auto& m) {
        for (std::size_t i = 0; i < m.branch_conv.size(); ++i) {
            const std::string bp =
                prefix + ".branch_d" + std::to_string(MlrmParams::kDilations[i]);
            fn(bp + ".kernel", m.branch_conv[i].kernel);
            fn(bp + ".bias", m.branch_conv[i].bias);
            fn(bp + ".gamma", m.branch_bn[i].gamma);
            fn(bp + ".beta", m.branch_bn[i].beta);
            fn(bp + ".running_mean", m.branch_bn[i].running_mean);
            fn(bp + ".running_var", m.branch_bn[i].running_var);
        }
        fn(prefix + ".fuse.kernel", m.fuse.kernel);
        fn(prefix + ".fuse.bias", m.fuse.bias);
    };
    mlrm("fuse1", p.fuse1);
    mlrm("fuse2", p.fuse2);
    fn("global_proj.kernel", p.global_proj.kernel);
    fn("global_proj.bias", p.global_proj.bias);
    fn("head1.weight", p.head1_weight);
    fn("head1.bias", p.head1_bias);
    fn("head2.weight", p.head2_weight);
    fn("head2.bias", p.head2_bias);
}

struct ConvBnVars {
    ConvVars conv;
    BatchNormVars bn;
};

struct ModelVars {
    std::array<std::vector<ConvBnVars>, 5> blocks;
    std::array<HamVars, 3> ham;
    ConvBnVars lateral4, lateral3_a, lateral3_b;
    MlrmVars fuse1, fuse2;
    ConvVars global_proj;
    Variable head1_weight, head1_bias, head2_weight, head2_bias;
};

ModelVars bind_model(Tape& tape, ModelParams& params, bool requires_grad,
                     ParamSlots* slots = nullptr);

// Stage outputs after attention levels become relevant: returns R3, R4, R5.
std::array<Variable, 3> backbone_forward(const Variable& x, const ModelVars& v, Mode mode);

struct ForwardTrace {
    std::array<Variable, 3> pyramid;  // R3, R4, R5
    std::array<HamTrace, 3> ham;
    MlrmTrace fuse1, fuse2;
    Variable head_input;  // gap(fuse2 output) + 1x1(gap(R5)), flattened to N x C
    Variable logits;      // N x classes
};

ForwardTrace model_forward(const Variable& x, const ModelVars& v, Mode mode);

// No-grad convenience: fresh tape, eval-mode forward, returns raw logits.
Tensor predict_logits(ModelParams& params, const Tensor& input);

}  // namespace hmvgg
