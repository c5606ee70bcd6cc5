#include "pmfs/rdgen.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <mutex>
#include <sstream>
#include <vector>

#include "pmfs/errors.hpp"
#include "pmfs/kernels.hpp"
#include "pmfs/rng.hpp"

namespace pmfs::rdgen {

namespace {

// FFTW planning is not thread-safe; execution on distinct plans is.
std::mutex& plan_mutex() {
    static std::mutex m;
    return m;
}

using cplx = std::complex<double>;

struct Spectral2d {
    std::size_t n;
    std::size_t nc; // n * (n/2 + 1) packed coefficients
    double* real;
    fftw_complex* freq;
    fftw_plan fwd, inv;

    explicit Spectral2d(std::size_t n_) : n(n_), nc(n_ * (n_ / 2 + 1)) {
        real = fftw_alloc_real(n * n);
        freq = fftw_alloc_complex(nc);
        std::lock_guard<std::mutex> lock(plan_mutex());
        fwd = fftw_plan_dft_r2c_2d(static_cast<int>(n), static_cast<int>(n), real, freq,
                                   FFTW_ESTIMATE);
        inv = fftw_plan_dft_c2r_2d(static_cast<int>(n), static_cast<int>(n), freq, real,
                                   FFTW_ESTIMATE);
    }

    Spectral2d(const Spectral2d&) = delete;
    Spectral2d& operator=(const Spectral2d&) = delete;

    ~Spectral2d() {
        std::lock_guard<std::mutex> lock(plan_mutex());
        fftw_destroy_plan(fwd);
        fftw_destroy_plan(inv);
        fftw_free(real);
        fftw_free(freq);
    }

    void forward(const double* src, cplx* dst) {
        std::memcpy(real, src, n * n * sizeof(double));
        fftw_execute(fwd);
        std::memcpy(static_cast<void*>(dst), freq, nc * sizeof(cplx));
    }

    /// Normalized inverse; the input spectrum is left untouched.
    void inverse(const cplx* src, double* dst) {
        std::memcpy(freq, static_cast<const void*>(src), nc * sizeof(cplx));
        fftw_execute(inv);
        const double scale = 1.0 / static_cast<double>(n * n);
        for (std::size_t i = 0; i < n * n; ++i) dst[i] = real[i] * scale;
    }
};

double wavenumber(std::size_t j, std::size_t n, double L) {
    const double m = 3.14159265358979323846 / L;
    return m * (j <= n / 2 ? static_cast<double>(j)
                           : static_cast<double>(j) - static_cast<double>(n));
}

std::vector<double> squared_wavenumbers(std::size_t n, double L) {
    std::vector<double> k2(n * (n / 2 + 1));
    for (std::size_t i = 0; i < n; ++i) {
        const double kx = wavenumber(i, n, L);
        for (std::size_t j = 0; j <= n / 2; ++j) {
            const double ky = wavenumber(j, n, L);
            k2[i * (n / 2 + 1) + j] = kx * kx + ky * ky;
        }
    }
    return k2;
}

void check_stability(const double* u, std::size_t count, std::size_t step, double t) {
    for (std::size_t i = 0; i < count; ++i) {
        if (!(std::abs(u[i]) <= 1e3)) {
            std::ostringstream os;
            os << "solution blew up at step " << step << " (t = " << t << ")";
            throw StabilityError(os.str());
        }
    }
}

} // namespace

void RdConfig::validate() const {
    if (n < 4 || n % 2 != 0)
        throw ConfigError("grid size must be even and at least 4, got " + std::to_string(n));
    if (!(L > 0.0)) throw ConfigError("domain half-width must be positive");
    if (!(dt > 0.0)) throw ConfigError("time step must be positive");
    if (!(T > 0.0)) throw ConfigError("final time must be positive");
    if (D < 0.0) throw ConfigError("diffusion coefficient must be non-negative");
    if (stride == 0) throw ConfigError("output stride must be at least 1");
    const double raw = T / dt;
    const auto k = static_cast<std::size_t>(std::llround(raw));
    if (k == 0 || std::abs(raw - static_cast<double>(k)) > 1e-9)
        throw ConfigError("final time must be an integer number of steps");
    if (k % stride != 0)
        throw ConfigError("step count " + std::to_string(k) +
                          " is not a multiple of the output stride " + std::to_string(stride));
}

std::size_t RdConfig::steps() const {
    return static_cast<std::size_t>(std::llround(T / dt));
}

std::size_t RdConfig::stored_steps() const { return steps() / stride + 1; }

Tensor spiral_initial_condition(std::size_t n, double L) {
    Tensor u0({n, n}, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = -L + 2.0 * L * static_cast<double>(i) / static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) {
            const double y = -L + 2.0 * L * static_cast<double>(j) / static_cast<double>(n);
            const double r = std::sqrt(x * x + y * y);
            const double theta = std::atan2(y, x);
            u0(i, j) = std::tanh(r * std::cos(theta - r));
        }
    }
    return u0;
}

RdTrajectory rd_solve(const RdConfig& cfg) {
    const Tensor ic = spiral_initial_condition(cfg.n, cfg.L);
    return rd_solve_from(cfg, ic, ic);
}

RdTrajectory rd_solve_from(const RdConfig& cfg, const Tensor& u0, const Tensor& v0) {
    cfg.validate();
    const std::size_t n = cfg.n;
    if (u0.rank() != 2 || u0.rows() != n || u0.cols() != n)
        throw ShapeError("initial u must be " + std::to_string(n) + " x " + std::to_string(n) +
                         ", got " + u0.shape_str());
    require_same_shape(u0, v0, "initial condition");
    u0.require_finite("initial u");
    v0.require_finite("initial v");

    const std::size_t g = n * n;
    const std::size_t steps = cfg.steps();
    const std::size_t K = cfg.stored_steps();
    const double h = cfg.dt;

    Spectral2d fft(n);
    const std::size_t nc = fft.nc;
    const std::vector<double> k2 = squared_wavenumbers(n, cfg.L);
    std::vector<double> E(nc), E2(nc);
    for (std::size_t i = 0; i < nc; ++i) {
        E[i] = std::exp(-cfg.D * k2[i] * h / 2.0);
        E2[i] = E[i] * E[i];
    }

    RdTrajectory traj;
    traj.config = cfg;
    traj.times = Tensor::vector(K);
    traj.u = Tensor({K, n, n}, 0.0);
    traj.v = Tensor({K, n, n}, 0.0);

    std::vector<double> u(u0.values()), v(v0.values());
    std::vector<cplx> uh(nc), vh(nc);
    fft.forward(u.data(), uh.data());
    fft.forward(v.data(), vh.data());

    std::vector<double> fu(g), fv(g), us(g), vs(g);
    std::vector<cplx> k1u(nc), k1v(nc), k2u(nc), k2v(nc), k3u(nc), k3v(nc), k4u(nc), k4v(nc);
    std::vector<cplx> su(nc), sv(nc);

    std::size_t stored = 0;
    for (std::size_t step = 0;; ++step) {
        const double t = static_cast<double>(step) * h;
        check_stability(u.data(), g, step, t);
        if (step % cfg.stride == 0) {
            traj.times[stored] = t;
            std::memcpy(traj.u.data() + stored * g, u.data(), g * sizeof(double));
            std::memcpy(traj.v.data() + stored * g, v.data(), g * sizeof(double));
            ++stored;
        }
        if (step == steps) break;

        // stage 1 at the current state
        kernels::rd_reaction(u.data(), v.data(), fu.data(), fv.data(), g, cfg.mu);
        fft.forward(fu.data(), k1u.data());
        fft.forward(fv.data(), k1v.data());

        // stage 2 at E (state + h/2 k1)
        for (std::size_t i = 0; i < nc; ++i) {
            su[i] = E[i] * (uh[i] + 0.5 * h * k1u[i]);
            sv[i] = E[i] * (vh[i] + 0.5 * h * k1v[i]);
        }
        fft.inverse(su.data(), us.data());
        fft.inverse(sv.data(), vs.data());
        kernels::rd_reaction(us.data(), vs.data(), fu.data(), fv.data(), g, cfg.mu);
        fft.forward(fu.data(), k2u.data());
        fft.forward(fv.data(), k2v.data());

        // stage 3 at E state + h/2 k2
        for (std::size_t i = 0; i < nc; ++i) {
            su[i] = E[i] * uh[i] + 0.5 * h * k2u[i];
            sv[i] = E[i] * vh[i] + 0.5 * h * k2v[i];
        }
        fft.inverse(su.data(), us.data());
        fft.inverse(sv.data(), vs.data());
        kernels::rd_reaction(us.data(), vs.data(), fu.data(), fv.data(), g, cfg.mu);
        fft.forward(fu.data(), k3u.data());
        fft.forward(fv.data(), k3v.data());

        // stage 4 at E^2 state + h E k3
        for (std::size_t i = 0; i < nc; ++i) {
            su[i] = E2[i] * uh[i] + h * E[i] * k3u[i];
            sv[i] = E2[i] * vh[i] + h * E[i] * k3v[i];
        }
        fft.inverse(su.data(), us.data());
        fft.inverse(sv.data(), vs.data());
        kernels::rd_reaction(us.data(), vs.data(), fu.data(), fv.data(), g, cfg.mu);
        fft.forward(fu.data(), k4u.data());
        fft.forward(fv.data(), k4v.data());

        for (std::size_t i = 0; i < nc; ++i) {
            uh[i] = E2[i] * uh[i] +
                    (h / 6.0) * (E2[i] * k1u[i] + 2.0 * E[i] * (k2u[i] + k3u[i]) + k4u[i]);
            vh[i] = E2[i] * vh[i] +
                    (h / 6.0) * (E2[i] * k1v[i] + 2.0 * E[i] * (k2v[i] + k3v[i]) + k4v[i]);
        }
        fft.inverse(uh.data(), u.data());
        fft.inverse(vh.data(), v.data());
    }

    return traj;
}

Tensor spectral_laplacian(const Tensor& field, double L) {
    if (field.rank() != 2 || field.rows() != field.cols())
        throw ShapeError("expected a square field, got " + field.shape_str());
    const std::size_t n = field.rows();
    Spectral2d fft(n);
    const std::vector<double> k2 = squared_wavenumbers(n, L);
    std::vector<cplx> hat(fft.nc);
    fft.forward(field.data(), hat.data());
    for (std::size_t i = 0; i < fft.nc; ++i) hat[i] *= -k2[i];
    Tensor out({n, n}, 0.0);
    fft.inverse(hat.data(), out.data());
    return out;
}

RdTrajectory corrupt_lowfidelity(const RdTrajectory& traj, const NoiseConfig& noise) {
    if (noise.sigma < 0.0) throw ConfigError("noise scale must be non-negative");
    traj.u.require_finite("trajectory u");
    traj.v.require_finite("trajectory v");

    RdTrajectory out = traj;
    const std::size_t K = traj.times.extent(0);
    const std::size_t g = traj.grid() * traj.grid();
    Rng rng(noise.seed);
    for (std::size_t k = 0; k < K; ++k) {
        double* u = out.u.data() + k * g;
        double* v = out.v.data() + k * g;
        for (std::size_t i = 0; i < g; ++i) u[i] *= std::exp(noise.sigma * rng.normal());
        for (std::size_t i = 0; i < g; ++i) v[i] *= std::exp(noise.sigma * rng.normal());
    }
    return out;
}

Tensor extract_vertex_series(const RdTrajectory& traj) {
    const std::size_t K = traj.times.extent(0);
    const std::size_t n = traj.grid();
    if (K == 0 || n == 0) throw DataError("trajectory is empty");
    Tensor out = Tensor::matrix(K, 4);
    for (std::size_t k = 0; k < K; ++k) {
        const double* u = traj.u_field(k);
        out(k, 0) = u[0];
        out(k, 1) = u[n - 1];
        out(k, 2) = u[(n - 1) * n];
        out(k, 3) = u[(n - 1) * n + (n - 1)];
    }
    return out;
}

data::MultiFidelityDataset build_rd_dataset(const RdDatasetConfig& cfg) {
    if (cfg.mu_values.empty()) throw ConfigError("no reaction parameter values given");
    for (double mu : cfg.mu_values)
        if (mu < 0.5 || mu > 1.5) {
            std::ostringstream os;
            os << "reaction parameter " << mu << " is outside [0.5, 1.5]";
            throw ConfigError(os.str());
        }
    cfg.hf.validate();
    cfg.lf.validate();
    if (!(cfg.t_train > 0.0) || cfg.t_train > cfg.hf.T)
        throw ConfigError("training horizon must lie in (0, T]");

    const std::size_t N = cfg.mu_values.size();
    std::vector<data::MfSample> samples(N);
    std::vector<std::exception_ptr> failures(N);
    const Rng noise_base(cfg.noise.seed);

    bool parallel = kernels::backend() == kernels::Backend::OpenMP && kernels::max_threads() > 1;
#pragma omp parallel for schedule(dynamic) if (parallel)
    for (std::size_t i = 0; i < N; ++i) {
        try {
            const double mu = cfg.mu_values[i];
            RdConfig hf = cfg.hf;
            hf.mu = mu;
            RdConfig lf = cfg.lf;
            lf.mu = mu;

            const RdTrajectory fine = rd_solve(hf);
            RdTrajectory coarse = rd_solve(lf);
            NoiseConfig noise = cfg.noise;
            noise.seed = noise_base.fork(i).seed();
            coarse = corrupt_lowfidelity(coarse, noise);

            if (!fine.times.same_shape(coarse.times))
                throw DataError("fine and coarse runs disagree on the stored time grid");
            for (std::size_t k = 0; k < fine.times.extent(0); ++k)
                if (fine.times[k] != coarse.times[k])
                    throw DataError("fine and coarse runs disagree on the stored time grid");

            const std::size_t K = fine.times.extent(0);
            const std::size_t ghf = hf.n * hf.n;
            const std::size_t glf = lf.n * lf.n;

            data::MfSample s;
            s.times = fine.times;
            s.meta.mu = mu;
            std::ostringstream id;
            id << "mu=" << mu;
            s.meta.id = id.str();

            Tensor level0 = Tensor::matrix(K, 2);
            for (std::size_t k = 0; k < K; ++k) {
                level0(k, 0) = fine.times[k];
                level0(k, 1) = mu;
            }
            Tensor level2 = Tensor::matrix(K, glf);
            for (std::size_t k = 0; k < K; ++k)
                std::memcpy(level2.row(k), coarse.u_field(k), glf * sizeof(double));
            Tensor target = Tensor::matrix(K, ghf);
            for (std::size_t k = 0; k < K; ++k)
                std::memcpy(target.row(k), fine.u_field(k), ghf * sizeof(double));

            s.level_inputs.push_back(std::move(level0));
            s.level_inputs.push_back(extract_vertex_series(fine));
            s.level_inputs.push_back(std::move(level2));
            s.target = std::move(target);
            samples[i] = std::move(s);
        } catch (...) {
            failures[i] = std::current_exception();
        }
    }
    for (std::size_t i = 0; i < N; ++i)
        if (failures[i]) std::rethrow_exception(failures[i]);

    data::MultiFidelityDataset ds;
    ds.n_levels = 3;
    ds.samples = std::move(samples);
    ds.t_train = cfg.t_train;

    auto fmt = [](double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    };
    ds.meta["experiment"] = "rd";
    ds.meta["n_hf"] = std::to_string(cfg.hf.n);
    ds.meta["n_lf"] = std::to_string(cfg.lf.n);
    ds.meta["D_hf"] = fmt(cfg.hf.D);
    ds.meta["D_lf"] = fmt(cfg.lf.D);
    ds.meta["dt"] = fmt(cfg.hf.dt);
    ds.meta["T"] = fmt(cfg.hf.T);
    ds.meta["stride"] = std::to_string(cfg.hf.stride);
    ds.meta["noise_sigma"] = fmt(cfg.noise.sigma);
    ds.meta["noise_seed"] = std::to_string(cfg.noise.seed);
    ds.meta["t_train"] = fmt(cfg.t_train);
    {
        std::ostringstream os;
        os.precision(17);
        for (std::size_t i = 0; i < cfg.mu_values.size(); ++i)
            os << (i ? "," : "") << cfg.mu_values[i];
        ds.meta["mu_values"] = os.str();
    }

    ds.validate();
    return ds;
}

} // namespace pmfs::rdgen
