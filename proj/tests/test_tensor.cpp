#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>

#include "pmfs/tensor.hpp"

using pmfs::Tensor;

TEST_CASE("shape constructors and accessors") {
    Tensor m = Tensor::matrix(3, 4, 1.5);
    CHECK(m.rank() == 2);
    CHECK(m.rows() == 3);
    CHECK(m.cols() == 4);
    CHECK(m.size() == 12);
    CHECK(m(2, 3) == 1.5);

    Tensor v = Tensor::vector(5);
    CHECK(v.rank() == 1);
    CHECK(v.extent(0) == 5);
    CHECK(v[4] == 0.0);

    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t(0, 2) == 3);
    CHECK(t(1, 0) == 4);
    CHECK(t.row(1)[2] == 6);
}

TEST_CASE("data length must match shape") {
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), pmfs::ShapeError);
}

TEST_CASE("rows and cols require rank 2") {
    Tensor v = Tensor::vector(4);
    CHECK_THROWS_AS(v.rows(), pmfs::ShapeError);
    CHECK_THROWS_AS(v.cols(), pmfs::ShapeError);
}

TEST_CASE("extent bounds checked") {
    Tensor m = Tensor::matrix(2, 2);
    CHECK(m.extent(1) == 2);
    CHECK_THROWS_AS(m.extent(2), pmfs::ShapeError);
}

TEST_CASE("same_shape and require_same_shape") {
    Tensor a = Tensor::matrix(2, 3);
    Tensor b = Tensor::matrix(2, 3);
    Tensor c = Tensor::matrix(3, 2);
    CHECK(a.same_shape(b));
    CHECK(!a.same_shape(c));
    CHECK_NOTHROW(require_same_shape(a, b, "test"));
    CHECK_THROWS_AS(require_same_shape(a, c, "test"), pmfs::ShapeError);
    try {
        require_same_shape(a, c, "mismatch site");
    } catch (const pmfs::ShapeError& e) {
        std::string msg = e.what();
        CHECK(msg.find("mismatch site") != std::string::npos);
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[3x2]") != std::string::npos);
    }
}

TEST_CASE("finiteness checks") {
    Tensor a = Tensor::matrix(2, 2, 1.0);
    CHECK(a.all_finite());
    CHECK_NOTHROW(a.require_finite("field"));
    a(1, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK(!a.all_finite());
    CHECK_THROWS_AS(a.require_finite("field"), pmfs::NumericError);
    a(1, 1) = std::numeric_limits<double>::infinity();
    CHECK(!a.all_finite());
}

TEST_CASE("fill overwrites every element") {
    Tensor a = Tensor::matrix(2, 2, 3.0);
    a.fill(-1.0);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == -1.0);
}

TEST_CASE("rank 3 shapes index by innermost extent") {
    Tensor t({2, 3, 4}, 0.0);
    CHECK(t.size() == 24);
    CHECK(t.extent(2) == 4);
    CHECK(t.shape_str() == "[2x3x4]");
}
