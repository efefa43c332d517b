#include "adllab/tensor.hpp"

#include <cmath>
#include <sstream>

#include "adllab/error.hpp"

namespace adllab {

namespace {

std::int64_t checked_product(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (std::int64_t d : shape) {
        if (d <= 0) fail("bad-shape", "tensor axes must be positive, got " + std::to_string(d));
        n *= d;
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::int64_t> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<std::size_t>(checked_product(shape_)), 0.0);
}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_product(shape_) != static_cast<std::int64_t>(data_.size())) {
        fail("bad-shape", "data length " + std::to_string(data_.size()) +
                              " does not match shape " + shape_str());
    }
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::full(std::vector<std::int64_t> shape, double v) {
    Tensor t(std::move(shape));
    for (double& x : t.data_) x = v;
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double Tensor::min_value() const {
    double m = data_.empty() ? 0.0 : data_[0];
    for (double v : data_) m = v < m ? v : m;
    return m;
}

double Tensor::max_value() const {
    double m = data_.empty() ? 0.0 : data_[0];
    for (double v : data_) m = v > m ? v : m;
    return m;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << ", ";
        os << shape_[i];
    }
    os << ")";
    return os.str();
}

std::size_t Tensor::offset(std::initializer_list<std::int64_t> idx) const {
    if (static_cast<int>(idx.size()) != rank()) {
        fail("bad-index", "index rank " + std::to_string(idx.size()) + " vs tensor rank " +
                              std::to_string(rank()));
    }
    std::size_t off = 0;
    std::size_t axis = 0;
    for (std::int64_t i : idx) {
        if (i < 0 || i >= shape_[axis]) {
            fail("bad-index", "index " + std::to_string(i) + " out of bounds for axis " +
                                  std::to_string(axis) + " of " + shape_str());
        }
        off = off * static_cast<std::size_t>(shape_[axis]) + static_cast<std::size_t>(i);
        ++axis;
    }
    return off;
}

Tensor slice_batch(const Tensor& t, std::int64_t b) {
    if (t.rank() < 1) fail("bad-shape", "slice_batch needs rank >= 1, got " + t.shape_str());
    if (b < 0 || b >= t.dim(0)) {
        fail("bad-index", "batch index " + std::to_string(b) + " out of " + t.shape_str());
    }
    std::vector<std::int64_t> shape(t.shape().begin() + 1, t.shape().end());
    const std::int64_t stride = t.size() / t.dim(0);
    std::vector<double> data(t.data() + b * stride, t.data() + (b + 1) * stride);
    return Tensor(std::move(shape), std::move(data));
}

}  // namespace adllab
