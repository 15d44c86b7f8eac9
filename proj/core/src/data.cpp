#include "hmvgg/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hmvgg/kv.hpp"
#include "hmvgg/rng.hpp"

namespace hmvgg {

// ---- image decoding ----

namespace {

class ByteCursor {
public:
    ByteCursor(const std::string& bytes, const std::string& origin)
        : bytes_(bytes), origin_(origin) {}

    [[noreturn]] void fail(const std::string& message) const {
        throw ParseError(origin_ + ": byte " + std::to_string(pos_) + ": " + message);
    }

    bool eof() const { return pos_ >= bytes_.size(); }
    unsigned char peek() const { return static_cast<unsigned char>(bytes_[pos_]); }
    unsigned char next() {
        if (eof()) fail("unexpected end of file");
        return static_cast<unsigned char>(bytes_[pos_++]);
    }

    // whitespace and '#' comments between header fields
    void skip_separators() {
        while (!eof()) {
            const unsigned char c = peek();
            if (c == '#') {
                while (!eof() && next() != '\n') {
                }
            } else if (std::isspace(c)) {
                ++pos_;
            } else {
                return;
            }
        }
    }

    int read_header_int(const char* what) {
        skip_separators();
        if (eof() || !std::isdigit(peek())) fail(std::string("expected ") + what);
        long v = 0;
        while (!eof() && std::isdigit(peek())) {
            v = v * 10 + (next() - '0');
            if (v > 1000000) fail(std::string(what) + " is unreasonably large");
        }
        return static_cast<int>(v);
    }

    const unsigned char* take(std::size_t n) {
        if (pos_ + n > bytes_.size()) fail("pixel data truncated");
        const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes_.data()) + pos_;
        pos_ += n;
        return p;
    }

    std::size_t pos() const { return pos_; }

private:
    const std::string& bytes_;
    std::string origin_;
    std::size_t pos_ = 0;
};

}  // namespace

Tensor parse_image(const std::string& bytes, const std::string& origin) {
    ByteCursor cur(bytes, origin);
    if (bytes.size() < 2) cur.fail("not a PPM/PGM file");
    const char m0 = static_cast<char>(cur.next());
    const char m1 = static_cast<char>(cur.next());
    int channels = 0;
    if (m0 == 'P' && m1 == '6') {
        channels = 3;
    } else if (m0 == 'P' && m1 == '5') {
        channels = 1;
    } else {
        throw ParseError(origin + ": byte 0: unsupported magic, expected P6 or P5");
    }
    const int width = cur.read_header_int("width");
    const int height = cur.read_header_int("height");
    const int maxval = cur.read_header_int("maxval");
    if (width < 1 || height < 1) cur.fail("image extents must be positive");
    if (maxval != 255) cur.fail("only maxval 255 is supported, got " + std::to_string(maxval));
    const unsigned char sep = cur.next();
    if (!std::isspace(sep)) cur.fail("expected single whitespace after maxval");

    const std::size_t count =
        static_cast<std::size_t>(width) * static_cast<std::size_t>(height) *
        static_cast<std::size_t>(channels);
    const unsigned char* px = cur.take(count);

    // interleaved rows to planar C x H x W
    Tensor img(Shape{channels, height, width});
    double* out = img.data();
    const std::int64_t hw = static_cast<std::int64_t>(height) * width;
    for (std::int64_t i = 0; i < hw; ++i) {
        for (int c = 0; c < channels; ++c) {
            out[c * hw + i] = static_cast<double>(px[i * channels + c]) / 255.0;
        }
    }
    return img;
}

Tensor load_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_image(buf.str(), path.string());
}

namespace {

unsigned char quantize(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<unsigned char>(std::lround(c * 255.0));
}

std::string encode_pnm(const Tensor& img, int channels, const char* magic) {
    const std::int64_t h = img.extent(img.rank() - 2), w = img.extent(img.rank() - 1);
    std::string out(magic);
    out += "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    const std::int64_t hw = h * w;
    const double* p = img.data();
    for (std::int64_t i = 0; i < hw; ++i) {
        for (int c = 0; c < channels; ++c) {
            out.push_back(static_cast<char>(quantize(p[c * hw + i])));
        }
    }
    return out;
}

}  // namespace

std::string encode_ppm(const Tensor& img) {
    if (img.rank() != 3 || img.extent(0) != 3) {
        throw ShapeError("PPM encoding expects 3 x H x W, got " + img.shape().to_string());
    }
    return encode_pnm(img, 3, "P6");
}

std::string encode_pgm(const Tensor& img) {
    if (!(img.rank() == 2 || (img.rank() == 3 && img.extent(0) == 1))) {
        throw ShapeError("PGM encoding expects H x W or 1 x H x W, got " +
                         img.shape().to_string());
    }
    return encode_pnm(img, 1, "P5");
}

void save_image(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write to " + path.string() + " failed");
}

// ---- resizing and preprocessing ----

Tensor nearest_resize(const Tensor& img, std::int64_t out_h, std::int64_t out_w) {
    if (img.rank() != 3) {
        throw ShapeError("nearest_resize expects C x H x W, got " + img.shape().to_string());
    }
    if (out_h < 1 || out_w < 1) throw ShapeError("resize target extents must be positive");
    const std::int64_t c = img.extent(0), h = img.extent(1), w = img.extent(2);
    if (h == out_h && w == out_w) return img;
    Tensor out(Shape{c, out_h, out_w});
    const double* src = img.data();
    double* dst = out.data();
    for (std::int64_t ch = 0; ch < c; ++ch) {
        const double* sp = src + ch * h * w;
        double* dp = dst + ch * out_h * out_w;
        for (std::int64_t i = 0; i < out_h; ++i) {
            const std::int64_t si = i * h / out_h;
            for (std::int64_t j = 0; j < out_w; ++j) {
                dp[i * out_w + j] = sp[si * w + j * w / out_w];
            }
        }
    }
    return out;
}

Tensor preprocess(const std::vector<Tensor>& images, const ModelConfig& config) {
    if (images.empty()) throw ShapeError("preprocess needs at least one image");
    std::int64_t total = 0;
    for (const Tensor& img : images) {
        if (img.rank() != 3) {
            throw ShapeError("preprocess expects C x H x W images, got " +
                             img.shape().to_string());
        }
        total += img.extent(0);
    }
    if (total != config.input_channels) {
        throw ShapeError("sample provides " + std::to_string(total) +
                         " channels, model expects " + std::to_string(config.input_channels));
    }
    Tensor out(Shape{1, total, config.input_h, config.input_w});
    std::int64_t base = 0;
    for (const Tensor& img : images) {
        const Tensor sized = nearest_resize(img, config.input_h, config.input_w);
        const std::int64_t n = sized.numel();
        for (std::int64_t i = 0; i < n; ++i) out[base + i] = (sized[i] - 0.5) / 0.5;
        base += n;
    }
    return out;
}

// ---- manifest ----

Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    const std::filesystem::path dir = path.parent_path();

    Manifest m;
    bool have_classes = false;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        if (!have_classes) {
            const std::string prefix = "classes:";
            if (s.rfind(prefix, 0) != 0) {
                throw ParseError(path.string() + ":" + std::to_string(lineno) +
                                 ": first entry must be 'classes: a,b,...'");
            }
            for (const std::string& name : split_csv(trim(s.substr(prefix.size())))) {
                if (name.empty()) {
                    throw ParseError(path.string() + ":" + std::to_string(lineno) +
                                     ": empty class name");
                }
                m.classes.push_back(name);
            }
            if (m.classes.empty()) {
                throw ParseError(path.string() + ":" + std::to_string(lineno) +
                                 ": class list is empty");
            }
            have_classes = true;
            continue;
        }
        const auto tab = s.find('\t');
        if (tab == std::string::npos) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) +
                             ": expected 'path[,path2]<TAB>label'");
        }
        ManifestItem item;
        for (const std::string& p : split_csv(trim(s.substr(0, tab)))) {
            if (p.empty()) {
                throw ParseError(path.string() + ":" + std::to_string(lineno) + ": empty path");
            }
            std::filesystem::path fp(p);
            item.paths.push_back(fp.is_absolute() ? fp : dir / fp);
        }
        if (item.paths.empty() || item.paths.size() > 2) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) +
                             ": each sample lists one or two images");
        }
        const std::int64_t label = parse_i64(trim(s.substr(tab + 1)), "label");
        if (label < 0 || label >= static_cast<std::int64_t>(m.classes.size())) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": label " +
                             std::to_string(label) + " out of range for " +
                             std::to_string(m.classes.size()) + " classes");
        }
        item.label = static_cast<int>(label);
        m.items.push_back(std::move(item));
    }
    if (!have_classes || m.items.empty()) {
        throw ParseError(path.string() + ": manifest lists no samples");
    }
    return m;
}

Dataset load_dataset(const std::filesystem::path& manifest_path, const ModelConfig& config) {
    const Manifest m = load_manifest(manifest_path);
    Dataset ds;
    ds.classes = m.classes;
    ds.samples.reserve(m.items.size());
    for (const ManifestItem& item : m.items) {
        std::vector<Tensor> images;
        images.reserve(item.paths.size());
        for (const auto& p : item.paths) images.push_back(load_image(p));
        ds.samples.push_back(Sample{preprocess(images, config), item.label});
    }
    return ds;
}

// ---- synthetic corpus ----

namespace {

constexpr double kPi = 3.14159265358979323846;

// Rim drawing: every class is an annulus around a jittered center; classes
// differ in rim thickness, brightness, and whether one sector is thinned.
Tensor render_ring(Rng& rng, int size, int label) {
    const double s = static_cast<double>(size);
    const double cx = s / 2.0 + rng.uniform(-0.05, 0.05) * s;
    const double cy = s / 2.0 + rng.uniform(-0.05, 0.05) * s;
    const double radius = 0.32 * s + rng.uniform(-0.03, 0.03) * s;

    double thickness = 0.45 * radius;
    double brightness = 0.95;
    if (label == 2) {
        thickness = 0.15 * radius;
        brightness = 0.55;
    }
    bool notched = label == 1;
    const double notch_center = rng.uniform(0.0, 2.0 * kPi);
    const double notch_half = rng.uniform(1.1, 1.4);  // ~126-160 degrees total
    const double notch_scale = rng.uniform(0.0, 0.05);

    Tensor img(Shape{3, size, size});
    double* p = img.data();
    const std::int64_t hw = static_cast<std::int64_t>(size) * size;
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double dx = x + 0.5 - cx;
            const double dy = y + 0.5 - cy;
            const double d = std::sqrt(dx * dx + dy * dy);
            double half = thickness / 2.0;
            if (notched) {
                double ang = std::atan2(dy, dx) - notch_center;
                while (ang > kPi) ang -= 2.0 * kPi;
                while (ang < -kPi) ang += 2.0 * kPi;
                if (std::abs(ang) < notch_half) half *= notch_scale;
            }
            double v = 0.06;  // dim background
            if (std::abs(d - radius) < half) v = brightness;
            v += rng.uniform(-0.04, 0.04);
            v = std::clamp(v, 0.0, 1.0);
            const std::int64_t i = static_cast<std::int64_t>(y) * size + x;
            p[0 * hw + i] = v;           // fundus-style warm cast
            p[1 * hw + i] = 0.55 * v;
            p[2 * hw + i] = 0.25 * v;
        }
    }
    return img;
}

}  // namespace

std::filesystem::path synth_dataset(const std::filesystem::path& out_dir,
                                    const SynthOptions& options) {
    if (options.per_class < 1) throw ShapeError("per_class must be positive");
    if (options.size < 4) throw ShapeError("image size must be at least 4");
    std::filesystem::create_directories(out_dir);

    Rng rng(options.seed);
    std::ostringstream manifest;
    manifest << "# synthetic rim corpus\n";
    manifest << "classes: normal,early,advanced\n";
    for (int label = 0; label < 3; ++label) {
        for (int i = 0; i < options.per_class; ++i) {
            std::ostringstream stem;
            stem << "c" << label << "_";
            if (i < 100) stem << (i < 10 ? "00" : "0");
            stem << i;
            const std::string primary = stem.str() + ".ppm";
            save_image(out_dir / primary, encode_ppm(render_ring(rng, options.size, label)));
            if (options.pairs) {
                const std::string secondary = stem.str() + "_b.ppm";
                save_image(out_dir / secondary,
                           encode_ppm(render_ring(rng, options.size, label)));
                manifest << primary << "," << secondary << "\t" << label << "\n";
            } else {
                manifest << primary << "\t" << label << "\n";
            }
        }
    }
    const std::filesystem::path manifest_path = out_dir / "manifest.tsv";
    std::ofstream out(manifest_path);
    if (!out) throw IoError("cannot open " + manifest_path.string() + " for writing");
    out << manifest.str();
    if (!out) throw IoError("write to " + manifest_path.string() + " failed");
    return manifest_path;
}

}  // namespace hmvgg
