#include "pmfs/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace pmfs {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return shape.empty() ? 0 : n;
}

} // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {
    cols_ = shape_.empty() ? 0 : shape_.back();
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_product(shape_) != data_.size())
        throw ShapeError("tensor shape " + shape_str() + " does not match buffer length " +
                         std::to_string(data_.size()));
    cols_ = shape_.empty() ? 0 : shape_.back();
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) {
    return Tensor({rows, cols}, fill);
}

Tensor Tensor::vector(std::size_t n, double fill) {
    return Tensor({n}, fill);
}

std::size_t Tensor::extent(std::size_t axis) const {
    if (axis >= shape_.size())
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str());
    return shape_[axis];
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw ShapeError("rows() on tensor of shape " + shape_str());
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw ShapeError("cols() on tensor of shape " + shape_str());
    return shape_[1];
}

bool Tensor::all_finite() const {
    for (double x : data_)
        if (!std::isfinite(x)) return false;
    return true;
}

void Tensor::require_finite(const std::string& what) const {
    if (!all_finite()) throw NumericError("non-finite value in " + what);
}

void Tensor::fill(double value) {
    std::fill(data_.begin(), data_.end(), value);
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << 'x';
        os << shape_[i];
    }
    os << ']';
    return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const std::string& what) {
    if (!a.same_shape(b))
        throw ShapeError(what + ": shape " + a.shape_str() + " vs " + b.shape_str());
}

} // namespace pmfs
