#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace hmvgg {

// Base error type for the whole library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid shapes, broadcast failures, dimension mismatches.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Malformed files (images, manifests, checkpoints).
class ParseError : public Error {
public:
    using Error::Error;
};

// File system failures (missing file, unwritable directory).
class IoError : public Error {
public:
    using Error::Error;
};

// Ordered list of positive extents, row-major, N x C x H x W for image
// tensors. Rank 0 denotes a scalar (one element).
class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<std::int64_t> dims);
    explicit Shape(std::vector<std::int64_t> dims);

    std::int64_t rank() const { return static_cast<std::int64_t>(dims_.size()); }
    std::int64_t extent(std::int64_t axis) const;
    std::int64_t numel() const;
    const std::vector<std::int64_t>& dims() const { return dims_; }

    bool operator==(const Shape& other) const { return dims_ == other.dims_; }
    bool operator!=(const Shape& other) const { return !(*this == other); }

    std::string to_string() const;

private:
    std::vector<std::int64_t> dims_;
};

std::vector<std::int64_t> row_major_strides(const Shape& shape);

// Dense 64-bit float tensor, contiguous row-major storage. Operations
// return new tensors; an existing tensor is never mutated through the
// public API, so sharing across threads read-only is safe.
class Tensor {
public:
    Tensor() : data_(1, 0.0) {}
    explicit Tensor(Shape shape, double fill = 0.0);
    static Tensor scalar(double value);
    static Tensor from_data(Shape shape, std::vector<double> data);

    const Shape& shape() const { return shape_; }
    std::int64_t rank() const { return shape_.rank(); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    std::int64_t extent(std::int64_t axis) const { return shape_.extent(axis); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& buffer() { return data_; }
    const std::vector<double>& buffer() const { return data_; }

    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }

    // Multi-index access, bounds-checked. Convenience for tests and
    // cold paths; kernels index the flat buffer directly.
    double at(std::initializer_list<std::int64_t> idx) const;
    double& at(std::initializer_list<std::int64_t> idx);

    // Value of a one-element tensor.
    double item() const;

    bool all_finite() const;

private:
    Shape shape_;
    std::vector<double> data_;
};

// ---- elementwise ops (size-1 broadcast; see broadcast_shape) ----

Shape broadcast_shape(const Shape& a, const Shape& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);

// ---- reductions ----

Tensor reduce_sum(const Tensor& x, const std::vector<std::int64_t>& axes, bool keep);
Tensor reduce_mean(const Tensor& x, const std::vector<std::int64_t>& axes, bool keep);
Tensor reduce_max(const Tensor& x, const std::vector<std::int64_t>& axes, bool keep);
double sum_all(const Tensor& x);

// ---- linear algebra ----

// [M x K] . [K x N] -> [M x N]
Tensor matmul(const Tensor& a, const Tensor& b);

// ---- serialization: "HMT1", u32 rank, u32 extents, f64 payload, little-endian ----

void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);
void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace hmvgg
