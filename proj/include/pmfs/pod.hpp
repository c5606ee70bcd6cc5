#ifndef PMFS_POD_HPP
#define PMFS_POD_HPP

#include <cstddef>

#include "pmfs/tensor.hpp"

namespace pmfs::pod {

/// Truncated orthonormal basis extracted from a snapshot matrix. Rows of the
/// snapshot matrix are observations, columns are state entries.
struct PodBasis {
    Tensor mean;            // d
    Tensor modes;           // d x k, orthonormal columns
    Tensor singular_values; // k, descending
    double total_energy = 0.0; // sum of squared singular values over all modes

    std::size_t state_dim() const { return mean.extent(0); }
    std::size_t n_modes() const { return singular_values.extent(0); }

    /// Fraction of snapshot variance captured by the retained modes.
    double energy_captured() const;

    /// Coefficients of one state row (length d) -> length k.
    Tensor project_row(const double* y) const;
    /// Rows of a T x d sequence -> T x k coefficient sequence.
    Tensor project(const Tensor& seq) const;

    /// Inverse map: k coefficients -> length d state.
    void reconstruct_row(const double* a, double* y) const;
    Tensor reconstruct(const Tensor& coeffs) const;
};

/// Builds the basis by the method of snapshots: eigen-decomposition of the
/// centered Gram matrix. Retains the smallest number of modes whose energy
/// fraction reaches energy_target; max_modes (when nonzero) caps the count.
/// Directions with negligible variance are dropped regardless.
PodBasis pod_fit(const Tensor& snapshots, std::size_t max_modes = 0,
                 double energy_target = 1.0);

} // namespace pmfs::pod

#endif
