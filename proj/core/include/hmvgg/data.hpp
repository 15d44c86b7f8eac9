#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hmvgg/model.hpp"
#include "hmvgg/tensor.hpp"

namespace hmvgg {

// Binary PPM (P6) and PGM (P5) with maxval 255. Pixels scale to [0, 1].
// Returns C x H x W with C = 3 for PPM and 1 for PGM. Parse failures report
// the byte offset of the offending data.
Tensor parse_image(const std::string& bytes, const std::string& origin = "image");
Tensor load_image(const std::filesystem::path& path);

// Inverse direction; values are clamped to [0, 1] and quantized to 8 bits.
std::string encode_ppm(const Tensor& img);   // 3 x H x W
std::string encode_pgm(const Tensor& img);   // 1 x H x W or H x W
void save_image(const std::filesystem::path& path, const std::string& bytes);

// C x H x W resampled with the same floor index map the network upsampler uses.
Tensor nearest_resize(const Tensor& img, std::int64_t out_h, std::int64_t out_w);

// Channel-concatenates the images (in order), resizes to the configured
// extent, and maps [0, 1] pixel values to [-1, 1]. Returns 1 x C x H x W.
Tensor preprocess(const std::vector<Tensor>& images, const ModelConfig& config);

struct ManifestItem {
    std::vector<std::filesystem::path> paths;  // one or two images per sample
    int label = 0;
};

struct Manifest {
    std::vector<std::string> classes;
    std::vector<ManifestItem> items;
};

// Tab-separated listing. First meaningful line is "classes: a,b,c"; each
// following line is "path[,path2]<TAB>label-index". '#' starts a comment.
// Relative paths resolve against the manifest's directory.
Manifest load_manifest(const std::filesystem::path& path);

struct Sample {
    Tensor input;  // 1 x C x H x W
    int label = 0;
};

struct Dataset {
    std::vector<std::string> classes;
    std::vector<Sample> samples;
};

Dataset load_dataset(const std::filesystem::path& manifest_path, const ModelConfig& config);

// Writes a synthetic fundus-style ring corpus plus manifest.tsv and returns
// the manifest path. Class 0 is a thick bright rim, class 1 the same rim
// with one thinned sector, class 2 a thin faint rim.
struct SynthOptions {
    std::uint64_t seed = 0;
    int per_class = 10;
    int size = 32;
    bool pairs = false;  // also emit a second companion image per sample
};

std::filesystem::path synth_dataset(const std::filesystem::path& out_dir,
                                    const SynthOptions& options);

}  // namespace hmvgg
