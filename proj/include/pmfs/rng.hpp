#ifndef PMFS_RNG_HPP
#define PMFS_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace pmfs {

/// Seeded random stream with explicit bit-to-double mapping, so the same seed
/// yields the same draws on every standard library implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; draws come in deterministic pairs.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    /// Independent child stream; deterministic in (seed, stream index).
    Rng fork(std::uint64_t stream) const {
        return Rng(splitmix(seed_ + 0x9E3779B97F4A7C15ULL * (stream + 1)));
    }

    std::uint64_t seed() const { return seed_; }

    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace pmfs

#endif
