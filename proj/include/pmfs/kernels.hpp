#ifndef PMFS_KERNELS_HPP
#define PMFS_KERNELS_HPP

#include <cstddef>

namespace pmfs::kernels {

/// Numeric backend for the data-parallel kernels. Both backends compute every
/// output element with the same fixed-order inner loop, so results are
/// bit-identical regardless of backend or thread count; the serial backend is
/// kept as the reference implementation for tests and benchmarks.
enum class Backend { Serial, OpenMP };

Backend backend();
void set_backend(Backend b);
/// Number of worker threads the OpenMP backend would use right now.
int max_threads();

/// C(m x n) = A(m x k) * B(k x n), row-major.
void matmul(const double* A, const double* B, double* C,
            std::size_t m, std::size_t k, std::size_t n);

/// C(m x n) = A(k x m)^T * B(k x n), row-major.
void matmul_tn(const double* A, const double* B, double* C,
               std::size_t m, std::size_t k, std::size_t n);

/// G(n x n) = X(n x d) * X(n x d)^T (symmetric Gram matrix).
void gram(const double* X, double* G, std::size_t n, std::size_t d);

/// y(m) = W(m x n) * x(n), optionally accumulating into y.
void gemv(const double* W, const double* x, double* y,
          std::size_t m, std::size_t n, bool accumulate = false);

/// y(n) += W(m x n)^T * d(m).
void gemv_t_acc(const double* W, const double* d, double* y,
                std::size_t m, std::size_t n);

/// G(m x n) += a(m) * b(n)^T.
void outer_acc(const double* a, const double* b, double* G,
               std::size_t m, std::size_t n);

/// Reaction terms of the spiral-wave system at every grid point:
///   fu = (1 - r2) u + mu r2 v,  fv = -mu r2 u + (1 - r2) v,  r2 = u^2 + v^2.
void rd_reaction(const double* u, const double* v, double* fu, double* fv,
                 std::size_t n, double mu);

} // namespace pmfs::kernels

#endif
