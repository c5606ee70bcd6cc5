#include "pmfs/pod.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "pmfs/errors.hpp"
#include "pmfs/kernels.hpp"

namespace pmfs::pod {

double PodBasis::energy_captured() const {
    if (total_energy <= 0.0) return 0.0;
    double kept = 0.0;
    for (double s : singular_values.values()) kept += s * s;
    return kept / total_energy;
}

Tensor PodBasis::project_row(const double* y) const {
    const std::size_t d = state_dim();
    const std::size_t k = n_modes();
    Tensor a = Tensor::vector(k);
    std::vector<double> centered(d);
    for (std::size_t j = 0; j < d; ++j) centered[j] = y[j] - mean[j];
    kernels::gemv_t_acc(modes.data(), centered.data(), a.data(), d, k);
    return a;
}

Tensor PodBasis::project(const Tensor& seq) const {
    if (seq.rank() != 2 || seq.cols() != state_dim()) {
        std::ostringstream os;
        os << "projection expects T x " << state_dim() << " input, got " << seq.shape_str();
        throw ShapeError(os.str());
    }
    const std::size_t T = seq.rows();
    Tensor out = Tensor::matrix(T, n_modes());
    for (std::size_t t = 0; t < T; ++t) {
        Tensor a = project_row(seq.row(t));
        std::copy(a.values().begin(), a.values().end(), out.row(t));
    }
    return out;
}

void PodBasis::reconstruct_row(const double* a, double* y) const {
    const std::size_t d = state_dim();
    const std::size_t k = n_modes();
    for (std::size_t j = 0; j < d; ++j) {
        double s = mean[j];
        const double* mj = modes.row(j);
        for (std::size_t i = 0; i < k; ++i) s += mj[i] * a[i];
        y[j] = s;
    }
}

Tensor PodBasis::reconstruct(const Tensor& coeffs) const {
    if (coeffs.rank() != 2 || coeffs.cols() != n_modes()) {
        std::ostringstream os;
        os << "reconstruction expects T x " << n_modes() << " coefficients, got "
           << coeffs.shape_str();
        throw ShapeError(os.str());
    }
    const std::size_t T = coeffs.rows();
    Tensor out = Tensor::matrix(T, state_dim());
    for (std::size_t t = 0; t < T; ++t) reconstruct_row(coeffs.row(t), out.row(t));
    return out;
}

PodBasis pod_fit(const Tensor& snapshots, std::size_t max_modes, double energy_target) {
    if (snapshots.rank() != 2)
        throw ShapeError("snapshot matrix must be rank 2, got " + snapshots.shape_str());
    const std::size_t n = snapshots.rows();
    const std::size_t d = snapshots.cols();
    if (n == 0 || d == 0) throw ShapeError("snapshot matrix is empty");
    if (!(energy_target > 0.0) || energy_target > 1.0)
        throw ConfigError("energy target must lie in (0, 1]");
    snapshots.require_finite("snapshot matrix");

    PodBasis basis;
    basis.mean = Tensor::vector(d);
    for (std::size_t t = 0; t < n; ++t) {
        const double* row = snapshots.row(t);
        for (std::size_t j = 0; j < d; ++j) basis.mean[j] += row[j];
    }
    for (std::size_t j = 0; j < d; ++j) basis.mean[j] /= static_cast<double>(n);

    Tensor centered = Tensor::matrix(n, d);
    for (std::size_t t = 0; t < n; ++t) {
        const double* src = snapshots.row(t);
        double* dst = centered.row(t);
        for (std::size_t j = 0; j < d; ++j) dst[j] = src[j] - basis.mean[j];
    }

    Tensor gram = Tensor::matrix(n, n);
    kernels::gram(centered.data(), gram.data(), n, d);

    Eigen::MatrixXd G(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) G(static_cast<long>(i), static_cast<long>(j)) = gram(i, j);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
    if (eig.info() != Eigen::Success)
        throw NumericError("eigendecomposition of the snapshot Gram matrix failed");

    // eigenvalues come out ascending
    std::vector<double> lambda(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double l = std::max(eig.eigenvalues()(static_cast<long>(n - 1 - i)), 0.0);
        lambda[i] = l;
        total += l;
    }
    if (total <= 0.0) throw NumericError("snapshot matrix has no variance");
    basis.total_energy = total;

    const double rank_tol = 1e-12 * lambda[0];
    std::size_t rank = 0;
    while (rank < n && lambda[rank] > rank_tol) ++rank;

    std::size_t k = rank;
    if (energy_target < 1.0) {
        double acc = 0.0;
        for (std::size_t i = 0; i < rank; ++i) {
            acc += lambda[i];
            if (acc / total >= energy_target) {
                k = i + 1;
                break;
            }
        }
    }
    if (max_modes > 0) k = std::min(k, max_modes);
    if (k == 0) throw NumericError("no usable directions in the snapshot matrix");

    Tensor U = Tensor::matrix(n, k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t t = 0; t < n; ++t)
            U(t, i) = eig.eigenvectors()(static_cast<long>(t), static_cast<long>(n - 1 - i));

    basis.singular_values = Tensor::vector(k);
    for (std::size_t i = 0; i < k; ++i) basis.singular_values[i] = std::sqrt(lambda[i]);

    basis.modes = Tensor::matrix(d, k);
    kernels::matmul_tn(centered.data(), U.data(), basis.modes.data(), d, n, k);
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t i = 0; i < k; ++i) basis.modes(j, i) /= basis.singular_values[i];

    // one modified Gram-Schmidt pass to clean up residual non-orthogonality
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t p = 0; p < i; ++p) {
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += basis.modes(j, p) * basis.modes(j, i);
            for (std::size_t j = 0; j < d; ++j) basis.modes(j, i) -= dot * basis.modes(j, p);
        }
        double norm = 0.0;
        for (std::size_t j = 0; j < d; ++j) norm += basis.modes(j, i) * basis.modes(j, i);
        norm = std::sqrt(norm);
        if (norm <= 0.0) throw NumericError("mode collapsed during orthonormalization");
        for (std::size_t j = 0; j < d; ++j) basis.modes(j, i) /= norm;
    }

    // fix each mode's sign by its first nonzero entry
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double v = basis.modes(j, i);
            if (v != 0.0) {
                if (v < 0.0)
                    for (std::size_t q = 0; q < d; ++q) basis.modes(q, i) = -basis.modes(q, i);
                break;
            }
        }
    }

    return basis;
}

} // namespace pmfs::pod
