#ifndef PMFS_RDGEN_HPP
#define PMFS_RDGEN_HPP

#include <cstdint>
#include <vector>

#include "pmfs/dataio.hpp"
#include "pmfs/tensor.hpp"

namespace pmfs::rdgen {

/// Spiral-wave system on a periodic square [-L, L)^2:
///   u_t = (1 - r^2) u + mu r^2 v + D lap(u)
///   v_t = -mu r^2 u + (1 - r^2) v + D lap(v),   r^2 = u^2 + v^2.
struct RdConfig {
    std::size_t n = 100;      // grid points per axis
    double L = 10.0;          // half-width
    double D = 0.05;          // diffusion
    double mu = 1.0;          // reaction parameter
    double dt = 0.05;         // integrator step
    double T = 80.0;          // final time
    std::size_t stride = 10;  // store every stride-th step

    void validate() const;
    std::size_t steps() const;        // total integrator steps
    std::size_t stored_steps() const; // snapshots including t = 0
};

struct RdTrajectory {
    RdConfig config;
    Tensor times; // K
    Tensor u, v;  // K x n x n

    std::size_t grid() const { return config.n; }
    const double* u_field(std::size_t k) const {
        return u.data() + k * config.n * config.n;
    }
    const double* v_field(std::size_t k) const {
        return v.data() + k * config.n * config.n;
    }
};

struct NoiseConfig {
    double sigma = 0.8; // std dev of the underlying normal
    std::uint64_t seed = 0;
};

/// u = v = tanh(r cos(theta - r)) sampled on the n x n grid.
Tensor spiral_initial_condition(std::size_t n, double L);

/// Integrating-factor RK4 in Fourier space: diffusion handled exactly by the
/// spectral propagator, reaction terms by classical RK4 stages. A field value
/// exceeding 1e3 in magnitude aborts with the failing step.
RdTrajectory rd_solve(const RdConfig& cfg);
RdTrajectory rd_solve_from(const RdConfig& cfg, const Tensor& u0, const Tensor& v0);

/// FFT-based periodic Laplacian of one n x n field (helper for checks).
Tensor spectral_laplacian(const Tensor& field, double L);

/// Multiplies every stored u and v value by exp(sigma * z), z ~ N(0,1), with
/// a fixed draw order: per snapshot, u row-major then v row-major.
RdTrajectory corrupt_lowfidelity(const RdTrajectory& traj, const NoiseConfig& noise);

/// u at the four corner grid samples, per stored step: (0,0), (0,n-1),
/// (n-1,0), (n-1,n-1) -> K x 4.
Tensor extract_vertex_series(const RdTrajectory& traj);

struct RdDatasetConfig {
    std::vector<double> mu_values; // each within [0.5, 1.5]
    RdConfig hf;                   // mu is overwritten per sample
    RdConfig lf;                   // coarse grid, biased diffusion
    NoiseConfig noise;             // per-sample stream forked from the seed
    double t_train = 40.0;
};

/// Per mu value: level-0 inputs (t, mu), level-1 inputs from the clean
/// high-fidelity vertex sensors, level-2 inputs from the noisy coarse run
/// (u flattened), targets from the fine-grid u fields. All series cover
/// [0, T]; the dataset's split marker is t_train.
data::MultiFidelityDataset build_rd_dataset(const RdDatasetConfig& cfg);

} // namespace pmfs::rdgen

#endif
