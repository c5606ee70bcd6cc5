#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "pmfs/errors.hpp"
#include "pmfs/metrics.hpp"
#include "pmfs/tensor.hpp"

using namespace pmfs;

TEST_CASE("relative error on hand-computed pairs") {
    Tensor ref = Tensor::matrix(1, 2);
    ref(0, 0) = 3.0;
    ref(0, 1) = 4.0;

    Tensor zero = Tensor::matrix(1, 2, 0.0);
    CHECK(metrics::relative_error(zero, ref) == doctest::Approx(100.0).epsilon(1e-14));
    CHECK(metrics::relative_error(ref, ref) == 0.0);

    Tensor partial = ref;
    partial(0, 1) = 0.0;
    CHECK(metrics::relative_error(partial, ref) == doctest::Approx(80.0).epsilon(1e-14));

    Tensor two = Tensor::matrix(2, 2);
    two(0, 0) = 3.0;
    two(0, 1) = 4.0;
    two(1, 0) = 0.0;
    two(1, 1) = 1.0;
    Tensor guess = two;
    guess(1, 1) = 0.5;
    const double expected = 0.5 * (0.0 + 100.0 * 0.5 / 1.0);
    CHECK(metrics::relative_error(guess, two) == doctest::Approx(expected).epsilon(1e-14));

    const auto rows = metrics::rowwise_relative_error(guess, two, "pair");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] == 0.0);
    CHECK(rows[1] == doctest::Approx(50.0).epsilon(1e-14));
}

TEST_CASE("relative error matches a direct reimplementation") {
    std::mt19937_64 rng(2026);
    std::normal_distribution<double> dist(0.0, 2.0);

    std::vector<Tensor> preds, refs;
    for (int s = 0; s < 5; ++s) {
        Tensor p = Tensor::matrix(7, 4);
        Tensor r = Tensor::matrix(7, 4);
        for (std::size_t i = 0; i < p.size(); ++i) {
            p[i] = dist(rng);
            r[i] = dist(rng) + 3.0;
        }
        preds.push_back(p);
        refs.push_back(r);
    }

    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t s = 0; s < refs.size(); ++s) {
        for (std::size_t i = 0; i < refs[s].rows(); ++i) {
            double num = 0.0, den = 0.0;
            for (std::size_t j = 0; j < refs[s].cols(); ++j) {
                const double d = preds[s](i, j) - refs[s](i, j);
                num += d * d;
                den += refs[s](i, j) * refs[s](i, j);
            }
            acc += 100.0 * std::sqrt(num) / std::sqrt(den);
            ++count;
        }
    }
    const double direct = acc / double(count);

    CHECK(metrics::relative_error(preds, refs) == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("relative error rejects bad input") {
    Tensor ref = Tensor::matrix(2, 2, 1.0);
    Tensor pred = Tensor::matrix(2, 2, 1.0);

    Tensor degenerate = ref;
    degenerate(1, 0) = 0.0;
    degenerate(1, 1) = 0.0;
    CHECK_THROWS_WITH_AS(metrics::relative_error({pred}, {degenerate}, {"mu=0.5"}),
                         doctest::Contains("mu=0.5"), MetricError);
    CHECK_THROWS_WITH_AS(metrics::rowwise_relative_error(pred, degenerate, "probe"),
                         doctest::Contains("row 1"), MetricError);

    Tensor narrow = Tensor::matrix(2, 1, 1.0);
    CHECK_THROWS_AS(metrics::relative_error(narrow, ref), ShapeError);

    std::vector<Tensor> one{pred};
    std::vector<Tensor> two{ref, ref};
    std::vector<Tensor> none;
    CHECK_THROWS_AS(metrics::relative_error(one, two), ShapeError);
    CHECK_THROWS_AS(metrics::relative_error(none, none), MetricError);
}
