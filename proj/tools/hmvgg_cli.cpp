#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "hmvgg/checkpoint.hpp"
#include "hmvgg/data.hpp"
#include "hmvgg/gradcam.hpp"
#include "hmvgg/gradcheck_suite.hpp"
#include "hmvgg/train.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw hmvgg::IoError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void print_kv(const std::string& key, const std::string& value) {
    std::cout << key << "=" << value << "\n";
}

void print_kv(const std::string& key, double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", value);
    print_kv(key, std::string(buf));
}

std::string join_csv(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ",";
        out += items[i];
    }
    return out;
}

int run_synth(const std::string& out_dir, std::uint64_t seed, int per_class, int size,
              bool pairs) {
    hmvgg::SynthOptions opt;
    opt.seed = seed;
    opt.per_class = per_class;
    opt.size = size;
    opt.pairs = pairs;
    const auto manifest = hmvgg::synth_dataset(out_dir, opt);
    print_kv("manifest", manifest.string());
    print_kv("samples", std::to_string(3 * per_class));
    return 0;
}

int run_train(const std::string& data_path, const std::string& config_path, std::uint64_t seed,
              int epochs, const std::string& out_path) {
    hmvgg::RunConfig rc;
    if (!config_path.empty()) rc = hmvgg::parse_run_config(read_file(config_path));
    const hmvgg::Dataset data = hmvgg::load_dataset(data_path, rc.model);
    hmvgg::ModelParams params = hmvgg::ModelParams::make(rc.model);
    hmvgg::init_params(params, seed);
    const auto history =
        hmvgg::train_loop(params, data, rc.optim, rc.batch_size, epochs, seed);
    hmvgg::save_checkpoint(out_path, params);
    const std::string history_path = out_path + ".history.tsv";
    hmvgg::write_history(history_path, history);
    print_kv("checkpoint", out_path);
    print_kv("history", history_path);
    print_kv("epochs", std::to_string(epochs));
    print_kv("final_loss", history.back().loss);
    print_kv("final_train_accuracy", history.back().train_accuracy);
    return 0;
}

int run_eval(const std::string& ckpt_path, const std::string& data_path) {
    hmvgg::ModelParams params = hmvgg::load_checkpoint(ckpt_path);
    const hmvgg::Dataset data = hmvgg::load_dataset(data_path, params.config);
    const hmvgg::Metrics m = hmvgg::evaluate(params, data);
    print_kv("samples", std::to_string(m.total));
    print_kv("classes", join_csv(data.classes));
    print_kv("accuracy", m.accuracy);
    print_kv("macro_precision", m.macro_precision);
    print_kv("macro_recall", m.macro_recall);
    print_kv("macro_f1", m.macro_f1);
    for (std::size_t k = 0; k < m.precision.size(); ++k) {
        const std::string cls = "class" + std::to_string(k);
        print_kv(cls + "_precision", m.precision[k]);
        print_kv(cls + "_recall", m.recall[k]);
        print_kv(cls + "_f1", m.f1[k]);
    }
    std::string confusion;
    for (const auto& row : m.confusion) {
        for (std::int64_t v : row) {
            if (!confusion.empty()) confusion += ",";
            confusion += std::to_string(v);
        }
    }
    print_kv("confusion", confusion);
    return 0;
}

int run_gradcheck(bool full_model, std::uint64_t seed) {
    const auto checks =
        full_model ? hmvgg::run_full_model_gradcheck(seed) : hmvgg::run_op_gradchecks(seed);
    double worst = 0.0;
    bool ok = true;
    for (const auto& c : checks) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.3e", c.max_rel_err);
        print_kv(c.name, std::string(buf));
        worst = std::max(worst, c.max_rel_err);
        ok = ok && c.max_rel_err < c.threshold;
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3e", worst);
    print_kv("max", std::string(buf));
    print_kv("status", ok ? "pass" : "fail");
    return ok ? 0 : 1;
}

int run_gradcam(const std::string& ckpt_path, const std::string& image_path, int target_class,
                const std::string& level_name, const std::string& out_path) {
    hmvgg::ModelParams params = hmvgg::load_checkpoint(ckpt_path);
    hmvgg::PyramidLevel level = hmvgg::PyramidLevel::R5;
    if (level_name == "r3") {
        level = hmvgg::PyramidLevel::R3;
    } else if (level_name == "r4") {
        level = hmvgg::PyramidLevel::R4;
    } else if (level_name != "r5") {
        throw hmvgg::ParseError("level must be r3, r4, or r5, got '" + level_name + "'");
    }
    const hmvgg::Tensor image = hmvgg::load_image(image_path);
    const hmvgg::Tensor input = hmvgg::preprocess({image}, params.config);
    hmvgg::Tensor map = hmvgg::gradcam(params, input, target_class, level);
    const std::int64_t h = map.extent(2), w = map.extent(3);
    map = hmvgg::Tensor::from_data(hmvgg::Shape{h, w}, std::move(map.buffer()));
    hmvgg::save_image(out_path, hmvgg::encode_pgm(map));

    std::int64_t peak = 0;
    for (std::int64_t i = 1; i < map.numel(); ++i) {
        if (map[i] > map[peak]) peak = i;
    }
    print_kv("out", out_path);
    print_kv("peak_h", std::to_string(peak / w));
    print_kv("peak_w", std::to_string(peak % w));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hybrid-attention glaucoma grader"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth", "write a synthetic ring-image corpus");
    std::string synth_out;
    std::uint64_t synth_seed = 0;
    int per_class = 10;
    int size = 32;
    bool pairs = false;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--per-class", per_class, "images per class");
    synth->add_option("--size", size, "square image extent");
    synth->add_flag("--pairs", pairs, "emit two images per sample");

    auto* train = app.add_subcommand("train", "train from a manifest");
    std::string train_data, train_config, train_out;
    std::uint64_t train_seed = 0;
    int epochs = 1;
    train->add_option("--data", train_data, "manifest path")->required();
    train->add_option("--config", train_config, "key = value settings file");
    train->add_option("--seed", train_seed, "init and shuffle seed");
    train->add_option("--epochs", epochs, "training epochs");
    train->add_option("--out", train_out, "checkpoint output path")->required();

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
    std::string eval_ckpt, eval_data;
    eval->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
    eval->add_option("--data", eval_data, "manifest path")->required();

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    bool full_model = false;
    std::uint64_t gc_seed = 0;
    gradcheck->add_flag("--full-model", full_model, "check the assembled network");
    gradcheck->add_option("--seed", gc_seed, "probe seed");

    auto* gradcam = app.add_subcommand("gradcam", "class activation map for one image");
    std::string cam_ckpt, cam_image, cam_out, cam_level = "r5";
    int cam_class = 0;
    gradcam->add_option("--ckpt", cam_ckpt, "checkpoint path")->required();
    gradcam->add_option("--image", cam_image, "input image (PPM or PGM)")->required();
    gradcam->add_option("--class", cam_class, "target class index")->required();
    gradcam->add_option("--level", cam_level, "pyramid level: r3, r4, r5");
    gradcam->add_option("--out", cam_out, "output PGM path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return run_synth(synth_out, synth_seed, per_class, size, pairs);
        if (train->parsed()) {
            return run_train(train_data, train_config, train_seed, epochs, train_out);
        }
        if (eval->parsed()) return run_eval(eval_ckpt, eval_data);
        if (gradcheck->parsed()) return run_gradcheck(full_model, gc_seed);
        if (gradcam->parsed()) {
            return run_gradcam(cam_ckpt, cam_image, cam_class, cam_level, cam_out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
