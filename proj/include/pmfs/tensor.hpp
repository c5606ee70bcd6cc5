#ifndef PMFS_TENSOR_HPP
#define PMFS_TENSOR_HPP

#include <cstddef>
#include <string>
#include <vector>

#include "pmfs/errors.hpp"

namespace pmfs {

/// Dense row-major multi-dimensional array of doubles. Most of the library
/// uses rank 1 (vectors) and rank 2 (sequences of feature rows, T x d).
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    static Tensor vector(std::size_t n, double fill = 0.0);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    /// Extent along the given axis.
    std::size_t extent(std::size_t axis) const;
    /// Rank-2 accessors; throw ShapeError on other ranks.
    std::size_t rows() const;
    std::size_t cols() const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    /// Pointer to the start of row i of a rank-2 tensor.
    double* row(std::size_t i) { return data_.data() + i * cols_; }
    const double* row(std::size_t i) const { return data_.data() + i * cols_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    /// Throws NumericError mentioning `what` if any value is NaN/Inf.
    void require_finite(const std::string& what) const;

    void fill(double value);

    std::string shape_str() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
    std::size_t cols_ = 0; // cached innermost extent for rank >= 2
};

/// Shorthand shape check; throws ShapeError with both shapes on mismatch.
void require_same_shape(const Tensor& a, const Tensor& b, const std::string& what);

} // namespace pmfs

#endif
