#include "hmvgg/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace hmvgg {

namespace {

constexpr char kMagic[4] = {'H', 'M', 'V', 'K'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw ParseError("checkpoint truncated while reading u32");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(kMagic, 4);
    write_u32(out, kVersion);
    const std::string config = params.config.to_text();
    write_u32(out, static_cast<std::uint32_t>(config.size()));
    out.write(config.data(), static_cast<std::streamsize>(config.size()));
    for_each_param(params, [&out](const std::string&, const Tensor& t) { write_tensor(out, t); });
    if (!out) throw IoError("checkpoint write to " + path.string() + " failed");
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw ParseError(path.string() + ": bad checkpoint magic, expected HMVK");
    }
    const std::uint32_t version = read_u32(in);
    if (version != kVersion) {
        throw ParseError(path.string() + ": unsupported checkpoint version " +
                         std::to_string(version));
    }
    const std::uint32_t config_len = read_u32(in);
    std::string config_text(config_len, '\0');
    in.read(config_text.data(), static_cast<std::streamsize>(config_len));
    if (!in) throw ParseError(path.string() + ": truncated config text");

    ModelParams params = ModelParams::make(ModelConfig::from_text(config_text));
    for_each_param(params, [&in, &path](const std::string& name, Tensor& t) {
        Tensor loaded = read_tensor(in);
        if (loaded.shape() != t.shape()) {
            throw ParseError(path.string() + ": tensor " + name + " has shape " +
                             loaded.shape().to_string() + ", expected " + t.shape().to_string());
        }
        t = std::move(loaded);
    });
    return params;
}

}  // namespace hmvgg
