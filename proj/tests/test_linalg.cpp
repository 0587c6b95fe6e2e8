#include <doctest.h>

#include "tscope/linalg.hpp"

using namespace tscope;

TEST_CASE("matrix initializer list uses row-major logical layout") {
    Mat m(2, 2, {1.0, 2.0, 3.0, 4.0});
    CHECK(m(0, 0) == 1.0);
    CHECK(m(0, 1) == 2.0);
    CHECK(m(1, 0) == 3.0);
    CHECK(m(1, 1) == 4.0);
    Mat a(3, 3, {0, 0, 7, 0, -1, -1, 0, 0, 0.5});
    CHECK(a(0, 2) == 7.0);
    CHECK(a(1, 1) == -1.0);
    CHECK(a(2, 2) == 0.5);
    CHECK_THROWS_AS(Mat(2, 2, {1.0, 2.0}), std::length_error);
}

TEST_CASE("linear solve and inverse") {
    Mat a(3, 3, {2, 1, 0, 1, 3, 1, 0, 1, 4});
    Vec x{0.3, -1.2, 2.5};
    Vec b = a * x;
    Vec got = solve(a, b);
    CHECK((got - x).norm_inf() < 1e-13);
    Mat ai = inverse(a);
    CHECK(((a * ai) - Mat::identity(3)).norm_inf() < 1e-13);
    Mat sing(2, 2, {1, 2, 2, 4});
    CHECK_THROWS_AS(solve(sing, Vec{1.0, 1.0}), std::domain_error);
}

TEST_CASE("complex eigenpair of a 2x2 rotation-like matrix") {
    Mat m(2, 2, {0.1, -2.0, 2.0, 0.1});
    EigenPair2 e = eigen2(m);
    REQUIRE(e.complex_pair);
    CHECK(e.lambda.real() == doctest::Approx(0.1));
    CHECK(e.lambda.imag() == doctest::Approx(2.0));
    // eigenvector property: (M - lambda) v = 0
    const auto r1 = (m(0, 0) - e.lambda) * e.v1 + m(0, 1) * e.v2;
    const auto r2 = m(1, 0) * e.v1 + (m(1, 1) - e.lambda) * e.v2;
    CHECK(std::abs(r1) < 1e-12);
    CHECK(std::abs(r2) < 1e-12);
    Mat real_pair(2, 2, {2, 0, 0, 1});
    CHECK_FALSE(eigen2(real_pair).complex_pair);
}
