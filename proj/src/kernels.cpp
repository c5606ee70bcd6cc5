#include "pmfs/kernels.hpp"

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pmfs::kernels {

namespace {

#ifdef _OPENMP
Backend g_backend = Backend::OpenMP;
#else
Backend g_backend = Backend::Serial;
#endif

// Work below this many flops is not worth a parallel region.
constexpr std::size_t kParallelCutoff = 1 << 15;

inline bool use_omp(std::size_t flops) {
#ifdef _OPENMP
    return g_backend == Backend::OpenMP && flops >= kParallelCutoff &&
           !omp_in_parallel() && omp_get_max_threads() > 1;
#else
    (void)flops;
    return false;
#endif
}

} // namespace

Backend backend() { return g_backend; }

void set_backend(Backend b) { g_backend = b; }

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void matmul(const double* A, const double* B, double* C,
            std::size_t m, std::size_t k, std::size_t n) {
    const std::int64_t rows = static_cast<std::int64_t>(m);
    if (use_omp(m * k * n)) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < rows; ++i) {
            const double* a = A + i * k;
            double* c = C + i * n;
            for (std::size_t j = 0; j < n; ++j) c[j] = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = a[p];
                const double* b = B + p * n;
                for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
            }
        }
        return;
    }
    for (std::int64_t i = 0; i < rows; ++i) {
        const double* a = A + i * k;
        double* c = C + i * n;
        for (std::size_t j = 0; j < n; ++j) c[j] = 0.0;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[p];
            const double* b = B + p * n;
            for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

void matmul_tn(const double* A, const double* B, double* C,
               std::size_t m, std::size_t k, std::size_t n) {
    const std::int64_t rows = static_cast<std::int64_t>(m);
    if (use_omp(m * k * n)) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < rows; ++i) {
            double* c = C + i * n;
            for (std::size_t j = 0; j < n; ++j) c[j] = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = A[p * m + i];
                const double* b = B + p * n;
                for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
            }
        }
        return;
    }
    for (std::int64_t i = 0; i < rows; ++i) {
        double* c = C + i * n;
        for (std::size_t j = 0; j < n; ++j) c[j] = 0.0;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = A[p * m + i];
            const double* b = B + p * n;
            for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

void gram(const double* X, double* G, std::size_t n, std::size_t d) {
    const std::int64_t rows = static_cast<std::int64_t>(n);
    if (use_omp(n * n * d / 2)) {
#pragma omp parallel for schedule(dynamic)
        for (std::int64_t i = 0; i < rows; ++i) {
            const double* xi = X + i * d;
            for (std::size_t j = static_cast<std::size_t>(i); j < n; ++j) {
                const double* xj = X + j * d;
                double s = 0.0;
                for (std::size_t p = 0; p < d; ++p) s += xi[p] * xj[p];
                G[i * n + j] = s;
                G[j * n + static_cast<std::size_t>(i)] = s;
            }
        }
        return;
    }
    for (std::int64_t i = 0; i < rows; ++i) {
        const double* xi = X + i * d;
        for (std::size_t j = static_cast<std::size_t>(i); j < n; ++j) {
            const double* xj = X + j * d;
            double s = 0.0;
            for (std::size_t p = 0; p < d; ++p) s += xi[p] * xj[p];
            G[i * n + j] = s;
            G[j * n + static_cast<std::size_t>(i)] = s;
        }
    }
}

void gemv(const double* W, const double* x, double* y,
          std::size_t m, std::size_t n, bool accumulate) {
    const std::int64_t rows = static_cast<std::int64_t>(m);
    if (use_omp(m * n)) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < rows; ++i) {
            const double* w = W + i * n;
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += w[j] * x[j];
            if (accumulate)
                y[i] += s;
            else
                y[i] = s;
        }
        return;
    }
    for (std::int64_t i = 0; i < rows; ++i) {
        const double* w = W + i * n;
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += w[j] * x[j];
        if (accumulate)
            y[i] += s;
        else
            y[i] = s;
    }
}

void gemv_t_acc(const double* W, const double* d, double* y,
                std::size_t m, std::size_t n) {
    // Column-wise accumulation in fixed row order keeps results exact
    // regardless of backend.
    const std::int64_t cols = static_cast<std::int64_t>(n);
    if (use_omp(m * n)) {
#pragma omp parallel for schedule(static)
        for (std::int64_t j = 0; j < cols; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < m; ++i) s += W[i * n + static_cast<std::size_t>(j)] * d[i];
            y[j] += s;
        }
        return;
    }
    for (std::int64_t j = 0; j < cols; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += W[i * n + static_cast<std::size_t>(j)] * d[i];
        y[j] += s;
    }
}

void outer_acc(const double* a, const double* b, double* G,
               std::size_t m, std::size_t n) {
    const std::int64_t rows = static_cast<std::int64_t>(m);
    if (use_omp(m * n)) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < rows; ++i) {
            const double av = a[i];
            double* g = G + i * n;
            for (std::size_t j = 0; j < n; ++j) g[j] += av * b[j];
        }
        return;
    }
    for (std::int64_t i = 0; i < rows; ++i) {
        const double av = a[i];
        double* g = G + i * n;
        for (std::size_t j = 0; j < n; ++j) g[j] += av * b[j];
    }
}

void rd_reaction(const double* u, const double* v, double* fu, double* fv,
                 std::size_t n, double mu) {
    const std::int64_t len = static_cast<std::int64_t>(n);
    if (use_omp(n * 8)) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < len; ++i) {
            const double ui = u[i];
            const double vi = v[i];
            const double r2 = ui * ui + vi * vi;
            fu[i] = (1.0 - r2) * ui + mu * r2 * vi;
            fv[i] = -mu * r2 * ui + (1.0 - r2) * vi;
        }
        return;
    }
    for (std::int64_t i = 0; i < len; ++i) {
        const double ui = u[i];
        const double vi = v[i];
        const double r2 = ui * ui + vi * vi;
        fu[i] = (1.0 - r2) * ui + mu * r2 * vi;
        fv[i] = -mu * r2 * ui + (1.0 - r2) * vi;
    }
}

} // namespace pmfs::kernels
