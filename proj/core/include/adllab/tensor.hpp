#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace adllab {

// Dense multi-axis array of doubles, row-major, immutable by convention once
// it leaves the op that produced it. Layout for images and feature maps is
// (batch, height, width, channel); spatial maps are (batch, height, width).
// Rank-0 tensors are scalars (size 1).
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::int64_t> shape);
    Tensor(std::vector<std::int64_t> shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor full(std::vector<std::int64_t> shape, double v);

    const std::vector<std::int64_t>& shape() const noexcept { return shape_; }
    int rank() const noexcept { return static_cast<int>(shape_.size()); }
    std::int64_t dim(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
    std::int64_t size() const noexcept { return static_cast<std::int64_t>(data_.size()); }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // Multi-index access; index count must equal rank.
    double& at(std::initializer_list<std::int64_t> idx) { return data_[offset(idx)]; }
    double at(std::initializer_list<std::int64_t> idx) const { return data_[offset(idx)]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    double min_value() const;
    double max_value() const;

    std::string shape_str() const;  // "(2, 3, 4)", for error messages

private:
    std::size_t offset(std::initializer_list<std::int64_t> idx) const;

    std::vector<std::int64_t> shape_;
    std::vector<double> data_;
};

// Per-sample view copy: (B, ...) -> (...) for batch index b.
Tensor slice_batch(const Tensor& t, std::int64_t b);

}  // namespace adllab
