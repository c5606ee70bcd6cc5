// Compares the serial reference backend against the OpenMP backend on the
// data-parallel kernels. Results are bit-identical by construction, so the
// interesting output is wall time per call.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "pmfs/kernels.hpp"
#include "pmfs/rng.hpp"

using namespace pmfs;

namespace {

std::vector<double> random_buffer(std::size_t n, Rng& rng) {
    std::vector<double> buf(n);
    for (auto& x : buf) x = rng.uniform(-1.0, 1.0);
    return buf;
}

double best_of(const std::function<void()>& fn, int reps) {
    double best = 1e30;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

struct Case {
    const char* name;
    std::function<void()> run;
};

} // namespace

int main() {
    Rng rng(42);

    const std::size_t m = 256, k = 256, n = 256;
    const auto A = random_buffer(m * k, rng);
    const auto B = random_buffer(k * n, rng);
    std::vector<double> C(m * n);

    const std::size_t gn = 384, gd = 256;
    const auto X = random_buffer(gn * gd, rng);
    std::vector<double> G(gn * gn);

    const std::size_t vm = 1024, vn = 1024;
    const auto W = random_buffer(vm * vn, rng);
    const auto x = random_buffer(vn, rng);
    std::vector<double> y(vm);

    const std::size_t grid = 512 * 512;
    const auto u = random_buffer(grid, rng);
    const auto v = random_buffer(grid, rng);
    std::vector<double> fu(grid), fv(grid);

    const Case cases[] = {
        {"matmul 256^3", [&] { kernels::matmul(A.data(), B.data(), C.data(), m, k, n); }},
        {"matmul_tn 256^3", [&] { kernels::matmul_tn(A.data(), B.data(), C.data(), m, k, n); }},
        {"gram 384x256", [&] { kernels::gram(X.data(), G.data(), gn, gd); }},
        {"gemv 1024x1024", [&] { kernels::gemv(W.data(), x.data(), y.data(), vm, vn); }},
        {"rd_reaction 512^2",
         [&] { kernels::rd_reaction(u.data(), v.data(), fu.data(), fv.data(), grid, 1.0); }},
    };

    std::printf("threads available: %d\n", kernels::max_threads());
    std::printf("%-18s %12s %12s %9s\n", "kernel", "serial_ms", "openmp_ms", "speedup");
    for (const auto& c : cases) {
        kernels::set_backend(kernels::Backend::Serial);
        const double serial = best_of(c.run, 5);
        kernels::set_backend(kernels::Backend::OpenMP);
        const double parallel = best_of(c.run, 5);
        std::printf("%-18s %12.3f %12.3f %8.2fx\n", c.name, serial, parallel,
                    serial / parallel);
    }
    kernels::set_backend(kernels::Backend::OpenMP);
    return 0;
}
