#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <cstring>

#include "pmfs/pod.hpp"
#include "pmfs/rng.hpp"

using namespace pmfs;

namespace {

Tensor random_snapshots(std::size_t n, std::size_t d, Rng& rng) {
    Tensor t = Tensor::matrix(n, d);
    for (auto& x : t.values()) x = rng.uniform(-2.0, 2.0);
    return t;
}

} // namespace

TEST_CASE("modes are orthonormal") {
    Rng rng(101);
    Tensor snaps = random_snapshots(20, 12, rng);
    pod::PodBasis basis = pod::pod_fit(snaps);
    const std::size_t d = basis.state_dim();
    const std::size_t k = basis.n_modes();
    CHECK(k >= 1);
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = 0; b < k; ++b) {
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += basis.modes(j, a) * basis.modes(j, b);
            CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) < 1e-10);
        }
    }
}

TEST_CASE("energy criterion keeps the smallest sufficient mode count") {
    Rng rng(102);
    Tensor snaps = random_snapshots(15, 10, rng);
    const double target = 0.9;
    pod::PodBasis basis = pod::pod_fit(snaps, 0, target);
    pod::PodBasis full = pod::pod_fit(snaps);

    double total = 0.0;
    for (double s : full.singular_values.values()) total += s * s;
    CHECK(total == doctest::Approx(basis.total_energy).epsilon(1e-10));

    double kept = 0.0;
    for (double s : basis.singular_values.values()) kept += s * s;
    CHECK(kept / total >= target);

    const std::size_t k = basis.n_modes();
    REQUIRE(k >= 1);
    const double without_last =
        kept - basis.singular_values[k - 1] * basis.singular_values[k - 1];
    CHECK(without_last / total < target);

    CHECK(basis.energy_captured() == doctest::Approx(kept / total).epsilon(1e-8));
}

TEST_CASE("snapshots inside a low-dimensional subspace round-trip exactly") {
    Rng rng(103);
    const std::size_t d = 30, n = 15, r = 3;
    Tensor dirs = random_snapshots(r, d, rng);
    Tensor snaps = Tensor::matrix(n, d);
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t i = 0; i < r; ++i) {
            const double w = rng.uniform(-1.0, 1.0);
            for (std::size_t j = 0; j < d; ++j) snaps(t, j) += w * dirs(i, j);
        }

    pod::PodBasis basis = pod::pod_fit(snaps);
    CHECK(basis.n_modes() == r);

    Tensor coeffs = basis.project(snaps);
    Tensor back = basis.reconstruct(coeffs);
    double worst = 0.0;
    for (std::size_t i = 0; i < snaps.size(); ++i)
        worst = std::max(worst, std::abs(back[i] - snaps[i]));
    CHECK(worst < 1e-10);
}

TEST_CASE("matches a direct singular value decomposition") {
    Rng rng(104);
    const std::size_t n = 6, d = 4;
    Tensor snaps = random_snapshots(n, d, rng);
    pod::PodBasis basis = pod::pod_fit(snaps);

    Eigen::MatrixXd X(n, d);
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t j = 0; j < d; ++j) X(static_cast<long>(t), static_cast<long>(j)) = snaps(t, j);
    Eigen::RowVectorXd mean = X.colwise().mean();
    X.rowwise() -= mean;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinV);

    for (std::size_t j = 0; j < d; ++j)
        CHECK(basis.mean[j] == doctest::Approx(mean(static_cast<long>(j))).epsilon(1e-12));

    REQUIRE(basis.n_modes() <= static_cast<std::size_t>(svd.singularValues().size()));
    for (std::size_t i = 0; i < basis.n_modes(); ++i)
        CHECK(basis.singular_values[i] ==
              doctest::Approx(svd.singularValues()(static_cast<long>(i))).epsilon(1e-10));

    // columns agree up to sign
    for (std::size_t i = 0; i < basis.n_modes(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j)
            dot += basis.modes(j, i) * svd.matrixV()(static_cast<long>(j), static_cast<long>(i));
        CHECK(std::abs(std::abs(dot) - 1.0) < 1e-10);
    }
}

TEST_CASE("rank-one snapshots yield a single mode") {
    const std::size_t d = 8;
    Tensor dir = Tensor::vector(d);
    for (std::size_t j = 0; j < d; ++j) dir[j] = std::sin(0.3 * static_cast<double>(j + 1));
    Tensor snaps = Tensor::matrix(5, d);
    for (std::size_t t = 0; t < 5; ++t)
        for (std::size_t j = 0; j < d; ++j)
            snaps(t, j) = (static_cast<double>(t) - 2.0) * dir[j];

    pod::PodBasis basis = pod::pod_fit(snaps);
    CHECK(basis.n_modes() == 1);
    double norm = 0.0;
    for (double v : dir.values()) norm += v * v;
    norm = std::sqrt(norm);
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) dot += basis.modes(j, 0) * dir[j] / norm;
    CHECK(std::abs(std::abs(dot) - 1.0) < 1e-10);
}

TEST_CASE("mode count cap applies after the energy rule") {
    Rng rng(105);
    Tensor snaps = random_snapshots(12, 9, rng);
    pod::PodBasis basis = pod::pod_fit(snaps, 4);
    CHECK(basis.n_modes() == 4);
    pod::PodBasis loose = pod::pod_fit(snaps, 100);
    CHECK(loose.n_modes() > 4);
}

TEST_CASE("sign rule makes refits bit-identical") {
    Rng rng(106);
    Tensor snaps = random_snapshots(10, 7, rng);
    pod::PodBasis a = pod::pod_fit(snaps, 3);
    pod::PodBasis b = pod::pod_fit(snaps, 3);
    CHECK(std::memcmp(a.modes.data(), b.modes.data(), a.modes.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(a.singular_values.data(), b.singular_values.data(),
                      a.singular_values.size() * sizeof(double)) == 0);
    for (std::size_t i = 0; i < a.n_modes(); ++i) {
        for (std::size_t j = 0; j < a.state_dim(); ++j) {
            const double v = a.modes(j, i);
            if (v != 0.0) {
                CHECK(v > 0.0);
                break;
            }
        }
    }
}

TEST_CASE("projecting the mean gives zero coefficients") {
    Rng rng(107);
    Tensor snaps = random_snapshots(8, 5, rng);
    pod::PodBasis basis = pod::pod_fit(snaps, 3);
    Tensor a = basis.project_row(basis.mean.data());
    for (double v : a.values()) CHECK(v == 0.0);
}

TEST_CASE("degenerate inputs are rejected") {
    Tensor constant = Tensor::matrix(4, 3, 2.5);
    CHECK_THROWS_AS(pod::pod_fit(constant), NumericError);
    CHECK_THROWS_AS(pod::pod_fit(Tensor::vector(3)), ShapeError);
    Tensor snaps = Tensor::matrix(3, 2);
    CHECK_THROWS_AS(pod::pod_fit(snaps, 0, 1.5), ConfigError);
    CHECK_THROWS_AS(pod::pod_fit(snaps, 0, 0.0), ConfigError);
}

TEST_CASE("projection and reconstruction validate widths") {
    Rng rng(108);
    Tensor snaps = random_snapshots(6, 5, rng);
    pod::PodBasis basis = pod::pod_fit(snaps, 2);
    CHECK_THROWS_AS(basis.project(Tensor::matrix(3, 4)), ShapeError);
    CHECK_THROWS_AS(basis.reconstruct(Tensor::matrix(3, 3)), ShapeError);
}
