#include "hmvgg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace hmvgg {

namespace {

std::int64_t checked_numel(const std::vector<std::int64_t>& dims) {
    std::int64_t n = 1;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (dims[i] < 1) {
            std::ostringstream msg;
            msg << "invalid shape: extent " << dims[i] << " at axis " << i;
            throw ShapeError(msg.str());
        }
        n *= dims[i];
    }
    return n;
}

}  // namespace

Shape::Shape(std::initializer_list<std::int64_t> dims) : dims_(dims) {
    checked_numel(dims_);
}

Shape::Shape(std::vector<std::int64_t> dims) : dims_(std::move(dims)) {
    checked_numel(dims_);
}

std::int64_t Shape::extent(std::int64_t axis) const {
    if (axis < 0 || axis >= rank()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank()));
    }
    return dims_[static_cast<std::size_t>(axis)];
}

std::int64_t Shape::numel() const {
    std::int64_t n = 1;
    for (auto d : dims_) n *= d;
    return n;
}

std::string Shape::to_string() const {
    std::string s = "[";
    for (std::size_t i = 0; i < dims_.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(dims_[i]);
    }
    s += "]";
    return s;
}

std::vector<std::int64_t> row_major_strides(const Shape& shape) {
    const auto& d = shape.dims();
    std::vector<std::int64_t> strides(d.size(), 1);
    for (std::int64_t i = static_cast<std::int64_t>(d.size()) - 2; i >= 0; --i) {
        strides[static_cast<std::size_t>(i)] =
            strides[static_cast<std::size_t>(i + 1)] * d[static_cast<std::size_t>(i + 1)];
    }
    return strides;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_.numel()), fill) {}

Tensor Tensor::scalar(double value) {
    Tensor t;
    t.data_[0] = value;
    return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
    if (static_cast<std::int64_t>(data.size()) != shape.numel()) {
        throw ShapeError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape.to_string());
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
}

double Tensor::at(std::initializer_list<std::int64_t> idx) const {
    return const_cast<Tensor*>(this)->at(idx);
}

double& Tensor::at(std::initializer_list<std::int64_t> idx) {
    if (static_cast<std::int64_t>(idx.size()) != rank()) {
        throw ShapeError("index rank " + std::to_string(idx.size()) +
                         " does not match tensor rank " + std::to_string(rank()));
    }
    const auto strides = row_major_strides(shape_);
    std::int64_t flat = 0;
    std::size_t k = 0;
    for (auto i : idx) {
        if (i < 0 || i >= shape_.dims()[k]) {
            throw ShapeError("index " + std::to_string(i) + " out of bounds at axis " +
                             std::to_string(k));
        }
        flat += i * strides[k];
        ++k;
    }
    return data_[static_cast<std::size_t>(flat)];
}

double Tensor::item() const {
    if (numel() != 1) {
        throw ShapeError("item() requires a one-element tensor, got " + shape_.to_string());
    }
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

// ---- broadcasting ----

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const auto& da = a.dims();
    const auto& db = b.dims();
    const std::size_t rank = std::max(da.size(), db.size());
    std::vector<std::int64_t> out(rank, 1);
    for (std::size_t i = 0; i < rank; ++i) {
        // align trailing axes; missing leading axes act as extent 1
        const std::int64_t ea = i < rank - da.size() ? 1 : da[i - (rank - da.size())];
        const std::int64_t eb = i < rank - db.size() ? 1 : db[i - (rank - db.size())];
        if (ea == eb) {
            out[i] = ea;
        } else if (ea == 1) {
            out[i] = eb;
        } else if (eb == 1) {
            out[i] = ea;
        } else {
            throw ShapeError("cannot broadcast " + a.to_string() + " with " + b.to_string());
        }
    }
    return Shape(std::move(out));
}

namespace {

// Strides for reading `src` as if it had the broadcast shape `out`:
// stretched axes get stride 0, missing leading axes get stride 0.
std::vector<std::int64_t> broadcast_strides(const Shape& src, const Shape& out) {
    const auto& ds = src.dims();
    const auto& dout = out.dims();
    const std::size_t pad = dout.size() - ds.size();
    const auto native = row_major_strides(src);
    std::vector<std::int64_t> strides(dout.size(), 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        strides[pad + i] = (ds[i] == 1 && dout[pad + i] != 1) ? 0 : native[i];
    }
    return strides;
}

template <typename BinOp>
Tensor binary_broadcast(const Tensor& a, const Tensor& b, BinOp op) {
    if (a.shape() == b.shape()) {
        Tensor out(a.shape());
        const double* pa = a.data();
        const double* pb = b.data();
        double* po = out.data();
        const std::int64_t n = a.numel();
        for (std::int64_t i = 0; i < n; ++i) po[i] = op(pa[i], pb[i]);
        return out;
    }
    const Shape out_shape = broadcast_shape(a.shape(), b.shape());
    Tensor out(out_shape);
    const auto sa = broadcast_strides(a.shape(), out_shape);
    const auto sb = broadcast_strides(b.shape(), out_shape);
    const auto& dims = out_shape.dims();
    const std::int64_t rank = out_shape.rank();
    std::vector<std::int64_t> idx(static_cast<std::size_t>(rank), 0);
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    const std::int64_t n = out_shape.numel();
    std::int64_t ia = 0, ib = 0;
    for (std::int64_t flat = 0; flat < n; ++flat) {
        po[flat] = op(pa[ia], pb[ib]);
        // row-major odometer increment
        for (std::int64_t ax = rank - 1; ax >= 0; --ax) {
            auto uax = static_cast<std::size_t>(ax);
            ++idx[uax];
            ia += sa[uax];
            ib += sb[uax];
            if (idx[uax] < dims[uax]) break;
            ia -= sa[uax] * dims[uax];
            ib -= sb[uax] * dims[uax];
            idx[uax] = 0;
        }
    }
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_broadcast(a, b, [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_broadcast(a, b, [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_broadcast(a, b, [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& a, double factor) {
    Tensor out(a.shape());
    const double* pa = a.data();
    double* po = out.data();
    const std::int64_t n = a.numel();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * factor;
    return out;
}

Tensor sigmoid(const Tensor& x) {
    Tensor out(x.shape());
    const double* px = x.data();
    double* po = out.data();
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        const double v = px[i];
        if (v >= 0.0) {
            po[i] = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            po[i] = e / (1.0 + e);
        }
    }
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out(x.shape());
    const double* px = x.data();
    double* po = out.data();
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) po[i] = px[i] > 0.0 ? px[i] : 0.0;
    return out;
}

// ---- reductions ----

namespace {

enum class ReduceKind { Sum, Mean, Max };

void check_axes(const Shape& shape, const std::vector<std::int64_t>& axes) {
    std::vector<bool> seen(static_cast<std::size_t>(shape.rank()), false);
    for (auto ax : axes) {
        if (ax < 0 || ax >= shape.rank()) {
            throw ShapeError("reduce axis " + std::to_string(ax) + " out of range for shape " +
                             shape.to_string());
        }
        if (seen[static_cast<std::size_t>(ax)]) {
            throw ShapeError("duplicate reduce axis " + std::to_string(ax));
        }
        seen[static_cast<std::size_t>(ax)] = true;
    }
}

Tensor reduce_impl(const Tensor& x, const std::vector<std::int64_t>& axes, bool keep,
                   ReduceKind kind) {
    check_axes(x.shape(), axes);
    const auto& dims = x.shape().dims();
    std::vector<bool> reduced(dims.size(), false);
    for (auto ax : axes) reduced[static_cast<std::size_t>(ax)] = true;

    std::vector<std::int64_t> kept_dims;   // output shape with keep=true
    std::vector<std::int64_t> out_dims;    // output shape with keep=false
    std::int64_t count = 1;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (reduced[i]) {
            kept_dims.push_back(1);
            count *= dims[i];
        } else {
            kept_dims.push_back(dims[i]);
            out_dims.push_back(dims[i]);
        }
    }

    Tensor acc(Shape(kept_dims), kind == ReduceKind::Max
                                     ? -std::numeric_limits<double>::infinity()
                                     : 0.0);
    // walk the input row-major; map each element to its output slot
    const auto out_strides = row_major_strides(acc.shape());
    const std::int64_t rank = x.rank();
    std::vector<std::int64_t> idx(static_cast<std::size_t>(rank), 0);
    const double* px = x.data();
    double* po = acc.data();
    const std::int64_t n = x.numel();
    std::int64_t oflat = 0;
    for (std::int64_t flat = 0; flat < n; ++flat) {
        if (kind == ReduceKind::Max) {
            po[oflat] = std::max(po[oflat], px[flat]);
        } else {
            po[oflat] += px[flat];
        }
        for (std::int64_t ax = rank - 1; ax >= 0; --ax) {
            auto uax = static_cast<std::size_t>(ax);
            ++idx[uax];
            if (!reduced[uax]) oflat += out_strides[uax];
            if (idx[uax] < dims[uax]) break;
            if (!reduced[uax]) oflat -= out_strides[uax] * dims[uax];
            idx[uax] = 0;
        }
    }
    if (kind == ReduceKind::Mean) {
        double* p = acc.data();
        const std::int64_t m = acc.numel();
        for (std::int64_t i = 0; i < m; ++i) p[i] /= static_cast<double>(count);
    }
    if (keep) return acc;
    return Tensor::from_data(Shape(out_dims), std::move(acc.buffer()));
}

}  // namespace

Tensor reduce_sum(const Tensor& x, const std::vector<std::int64_t>& axes, bool keep) {
    return reduce_impl(x, axes, keep, ReduceKind::Sum);
}

Tensor reduce_mean(const Tensor& x, const std::vector<std::int64_t>& axes, bool keep) {
    return reduce_impl(x, axes, keep, ReduceKind::Mean);
}

Tensor reduce_max(const Tensor& x, const std::vector<std::int64_t>& axes, bool keep) {
    return reduce_impl(x, axes, keep, ReduceKind::Max);
}

double sum_all(const Tensor& x) {
    const double* p = x.data();
    double s = 0.0;
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) s += p[i];
    return s;
}

// ---- matmul ----

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw ShapeError("matmul requires rank-2 tensors, got " + a.shape().to_string() +
                         " and " + b.shape().to_string());
    }
    const std::int64_t m = a.extent(0);
    const std::int64_t k = a.extent(1);
    const std::int64_t k2 = b.extent(0);
    const std::int64_t n = b.extent(1);
    if (k != k2) {
        throw ShapeError("matmul inner extents disagree: " + a.shape().to_string() + " . " +
                         b.shape().to_string());
    }
    Tensor out(Shape{m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t p = 0; p < k; ++p) {
            const double av = pa[i * k + p];
            const double* brow = pb + p * n;
            double* orow = po + i * n;
            for (std::int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

// ---- serialization ----

namespace {

constexpr char kTensorMagic[4] = {'H', 'M', 'T', '1'};

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
    if (!in) throw ParseError("tensor stream truncated while reading u32");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw ParseError("tensor stream truncated while reading f64");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
    out.write(kTensorMagic, 4);
    write_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape().dims()) write_u32(out, static_cast<std::uint32_t>(d));
    const std::int64_t n = t.numel();
    for (std::int64_t i = 0; i < n; ++i) write_f64(out, t[i]);
    if (!out) throw IoError("tensor write failed");
}

Tensor read_tensor(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kTensorMagic, 4) != 0) {
        throw ParseError("bad tensor magic, expected HMT1");
    }
    const std::uint32_t rank = read_u32(in);
    if (rank > 8) throw ParseError("tensor rank " + std::to_string(rank) + " is implausible");
    std::vector<std::int64_t> dims(rank);
    for (auto& d : dims) d = static_cast<std::int64_t>(read_u32(in));
    Shape shape(std::move(dims));
    std::vector<double> data(static_cast<std::size_t>(shape.numel()));
    for (auto& v : data) v = read_f64(in);
    return Tensor::from_data(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write_tensor(out, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return read_tensor(in);
}

}  // namespace hmvgg
