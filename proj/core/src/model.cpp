#include "hmvgg/model.hpp"

#include <cmath>
#include <sstream>

#include "hmvgg/kv.hpp"
#include "hmvgg/rng.hpp"

namespace hmvgg {

ModelConfig ModelConfig::desk() {
    ModelConfig c;
    c.input_h = 32;
    c.input_w = 32;
    c.widths = {4, 8, 16, 32, 32};
    c.head_hidden = 8;
    return c;
}

void ModelConfig::validate() const {
    if (input_channels < 1) throw ShapeError("input_channels must be positive");
    if (input_h < 32 || input_w < 32 || input_h % 32 != 0 || input_w % 32 != 0) {
        throw ShapeError("input extents must be positive multiples of 32, got " +
                         std::to_string(input_h) + "x" + std::to_string(input_w));
    }
    for (int w : widths) {
        if (w < 1) throw ShapeError("stage widths must be positive");
    }
    if (head_hidden < 1) throw ShapeError("head_hidden must be positive");
    if (classes < 2) throw ShapeError("classes must be at least 2");
    if (ham_reduction < 1) throw ShapeError("ham_reduction must be positive");
}

std::string ModelConfig::to_text() const {
    std::ostringstream out;
    out << "input_channels = " << input_channels << "\n";
    out << "input_h = " << input_h << "\n";
    out << "input_w = " << input_w << "\n";
    out << "widths = " << widths[0] << "," << widths[1] << "," << widths[2] << "," << widths[3]
        << "," << widths[4] << "\n";
    out << "head_hidden = " << head_hidden << "\n";
    out << "classes = " << classes << "\n";
    out << "ham_reduction = " << ham_reduction << "\n";
    return out.str();
}

bool apply_config_entry(ModelConfig& config, const std::string& key, const std::string& value) {
    auto as_int = [&](const char* what) { return static_cast<int>(parse_i64(value, what)); };
    if (key == "input_channels") {
        config.input_channels = as_int("input_channels");
    } else if (key == "input_h") {
        config.input_h = parse_i64(value, "input_h");
    } else if (key == "input_w") {
        config.input_w = parse_i64(value, "input_w");
    } else if (key == "widths") {
        const auto parts = split_csv(value);
        if (parts.size() != config.widths.size()) {
            throw ParseError("widths needs " + std::to_string(config.widths.size()) +
                             " comma-separated values, got '" + value + "'");
        }
        for (std::size_t i = 0; i < parts.size(); ++i) {
            config.widths[i] = static_cast<int>(parse_i64(parts[i], "widths"));
        }
    } else if (key == "head_hidden") {
        config.head_hidden = as_int("head_hidden");
    } else if (key == "classes") {
        config.classes = as_int("classes");
    } else if (key == "ham_reduction") {
        config.ham_reduction = as_int("ham_reduction");
    } else {
        return false;
    }
    return true;
}

ModelConfig ModelConfig::from_text(const std::string& text) {
    ModelConfig c;
    for (const auto& [key, value] : parse_kv_text(text)) {
        if (!apply_config_entry(c, key, value)) {
            throw ParseError("unknown model config key '" + key + "'");
        }
    }
    c.validate();
    return c;
}

ConvBnParams ConvBnParams::make(int out_channels, int in_channels, int kernel_size, int padding) {
    ConvBnParams cb;
    cb.conv = ConvParams::make(out_channels, in_channels, kernel_size, 1, padding);
    cb.bn = BatchNormState::make(out_channels);
    return cb;
}

ModelParams ModelParams::make(const ModelConfig& config) {
    config.validate();
    ModelParams p;
    p.config = config;
    const std::array<int, 5> layer_counts{2, 2, 3, 3, 3};
    for (std::size_t b = 0; b < p.blocks.size(); ++b) {
        int in = b == 0 ? config.input_channels : config.widths[b - 1];
        for (int l = 0; l < layer_counts[b]; ++l) {
            p.blocks[b].push_back(ConvBnParams::make(config.widths[b], in, 3, 1));
            in = config.widths[b];
        }
    }
    for (std::size_t i = 0; i < p.ham.size(); ++i) {
        p.ham[i] = HamParams::make(config.widths[2 + i], config.ham_reduction);
    }
    p.lateral4 = ConvBnParams::make(config.widths[4], config.widths[3], 3, 1);
    p.lateral3_a = ConvBnParams::make(config.widths[4], config.widths[2], 3, 1);
    p.lateral3_b = ConvBnParams::make(config.widths[4], config.widths[4], 3, 1);
    p.fuse1 = MlrmParams::make(config.widths[4]);
    p.fuse2 = MlrmParams::make(config.widths[4]);
    p.global_proj = ConvParams::make(config.widths[4], config.widths[4], 1);
    p.head1_weight = Tensor(Shape{config.head_hidden, config.widths[4]});
    p.head1_bias = Tensor(Shape{config.head_hidden});
    p.head2_weight = Tensor(Shape{config.classes, config.head_hidden});
    p.head2_bias = Tensor(Shape{config.classes});
    return p;
}

void init_params(ModelParams& params, std::uint64_t seed) {
    Rng rng(seed);
    for_each_param(params, [&rng](const std::string& name, Tensor& t) {
        const bool is_kernel = name.ends_with(".kernel");
        const bool is_weight = name.ends_with(".weight");
        if (!is_kernel && !is_weight) return;
        std::int64_t fan_in = 1;
        for (std::int64_t a = 1; a < t.rank(); ++a) fan_in *= t.extent(a);
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
    });
}

ModelVars bind_model(Tape& tape, ModelParams& params, bool requires_grad, ParamSlots* slots) {
    ModelVars v;
    auto leaf = [&](Tensor& t) {
        Variable var = tape.leaf(t, requires_grad);
        if (slots) slots->push_back(ParamSlot{&t, var});
        return var;
    };
    auto conv_bn = [&](ConvBnParams& cb) {
        ConvBnVars out;
        out.conv = bind(tape, cb.conv, requires_grad, slots);
        out.bn = bind(tape, cb.bn, requires_grad, slots);
        return out;
    };
    for (std::size_t b = 0; b < params.blocks.size(); ++b) {
        for (auto& layer : params.blocks[b]) v.blocks[b].push_back(conv_bn(layer));
    }
    for (std::size_t i = 0; i < params.ham.size(); ++i) {
        v.ham[i] = bind(tape, params.ham[i], requires_grad, slots);
    }
    v.lateral4 = conv_bn(params.lateral4);
    v.lateral3_a = conv_bn(params.lateral3_a);
    v.lateral3_b = conv_bn(params.lateral3_b);
    v.fuse1 = bind(tape, params.fuse1, requires_grad, slots);
    v.fuse2 = bind(tape, params.fuse2, requires_grad, slots);
    v.global_proj = bind(tape, params.global_proj, requires_grad, slots);
    v.head1_weight = leaf(params.head1_weight);
    v.head1_bias = leaf(params.head1_bias);
    v.head2_weight = leaf(params.head2_weight);
    v.head2_bias = leaf(params.head2_bias);
    return v;
}

namespace {

Variable conv_bn_relu(const Variable& x, const ConvBnVars& cb, Mode mode) {
    return relu(batchnorm(conv2d(x, cb.conv), cb.bn, mode));
}

}  // namespace

std::array<Variable, 3> backbone_forward(const Variable& x, const ModelVars& v, Mode mode) {
    std::array<Variable, 3> out;
    Variable cur = x;
    for (std::size_t b = 0; b < v.blocks.size(); ++b) {
        for (const auto& layer : v.blocks[b]) cur = conv_bn_relu(cur, layer, mode);
        cur = maxpool2d(cur);
        if (b >= 2) out[b - 2] = cur;
    }
    return out;
}

ForwardTrace model_forward(const Variable& x, const ModelVars& v, Mode mode) {
    ForwardTrace t;
    t.pyramid = backbone_forward(x, v, mode);
    for (std::size_t i = 0; i < t.ham.size(); ++i) {
        t.ham[i] = ham_forward(t.pyramid[i], v.ham[i]);
    }

    Variable upper1 = conv_bn_relu(t.ham[1].output, v.lateral4, mode);
    Variable prev1 = upsample_nearest(t.ham[2].output, upper1.shape().extent(2),
                                      upper1.shape().extent(3));
    t.fuse1 = mlrm_forward(upper1, prev1, v.fuse1, mode);

    Variable upper2 = conv_bn_relu(conv_bn_relu(t.ham[0].output, v.lateral3_a, mode),
                                   v.lateral3_b, mode);
    Variable prev2 =
        upsample_nearest(t.fuse1.output, upper2.shape().extent(2), upper2.shape().extent(3));
    t.fuse2 = mlrm_forward(upper2, prev2, v.fuse2, mode);

    Variable pooled = gap(t.fuse2.output);
    Variable global_ctx = conv2d(gap(t.pyramid[2]), v.global_proj);
    Variable summed = add(pooled, global_ctx);
    const std::int64_t n = summed.shape().extent(0);
    const std::int64_t c = summed.shape().extent(1);
    t.head_input = reshape(summed, Shape{n, c});
    Variable hidden = relu(fc(t.head_input, v.head1_weight, v.head1_bias));
    t.logits = fc(hidden, v.head2_weight, v.head2_bias);
    return t;
}

Tensor predict_logits(ModelParams& params, const Tensor& input) {
    const ModelConfig& c = params.config;
    if (input.rank() != 4 || input.extent(1) != c.input_channels || input.extent(2) != c.input_h ||
        input.extent(3) != c.input_w) {
        throw ShapeError("input " + input.shape().to_string() + " does not match configured N x " +
                         std::to_string(c.input_channels) + " x " + std::to_string(c.input_h) +
                         " x " + std::to_string(c.input_w));
    }
    Tape tape;
    ModelVars v = bind_model(tape, params, false);
    Variable x = tape.leaf(input, false);
    return model_forward(x, v, Mode::Eval).logits.value();
}

}  // namespace hmvgg
