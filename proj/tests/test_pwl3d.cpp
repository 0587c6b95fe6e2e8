#include <doctest.h>

#include <cmath>

#include "tscope/melnikov.hpp"
#include "tscope/pwl3d.hpp"

using namespace tscope;

namespace {
const double kPi = M_PI;
const double kPi2 = kPi * kPi;
const double kDen = 8.0 + 9.0 * kPi2;
}  // namespace

TEST_CASE("upper-zone matrix action") {
    // strip the rotation drift and the affine offset to expose A+ v
    pwl3d::Pwl3dParams q{1.0, 0.0, 1.0};
    const FieldEval fe = pwl3d::cartesian_field(q, 1.0, 1.0, 1.0);
    CHECK(fe.zone == 0);
    const Vec lin = fe.value - Vec{-1.0, 1.0, 0.0} - Vec{0.0, (kPi2 + 4.0) / 4.0, -2.5};
    CHECK(lin[0] == doctest::Approx(-4.0 * kPi2 / kDen));
    CHECK(lin[1] == doctest::Approx(-2.0));
    CHECK(lin[2] == doctest::Approx(0.5));
}

TEST_CASE("lower-zone matrix action") {
    pwl3d::Pwl3dParams q{1.0, 0.0, 1.0};
    const FieldEval fe = pwl3d::cartesian_field(q, 1.0, -1.0, 1.0);
    CHECK(fe.zone == 1);
    // value = rotation + eps A- v + eps^2 B- v with eps = 1
    const Vec am = fe.value - Vec{1.0, 1.0, 0.0} - Vec{0.0, 1.0, 0.0};
    CHECK(am[0] == doctest::Approx(-5.0));
    CHECK(am[1] == doctest::Approx(0.0));
    CHECK(am[2] == doctest::Approx(1.0));
}

TEST_CASE("cartesian field reduces to the rotation at eps = 0 and flags y = 0") {
    pwl3d::Pwl3dParams q{-5.0, 0.3, 0.0};
    const FieldEval fe = pwl3d::cartesian_field(q, 2.0, -3.0, 1.5);
    CHECK(fe.value[0] == doctest::Approx(3.0));
    CHECK(fe.value[1] == doctest::Approx(2.0));
    CHECK(fe.value[2] == 0.0);
    CHECK(pwl3d::cartesian_field(q, 2.0, 0.0, 1.5).on_boundary);
}

TEST_CASE("reduced field spot values and domain guard") {
    // lower-zone first-order formula at theta = pi/2 (formula evaluation)
    const Vec f = pwl3d::detail::f1_lower(kPi / 2.0, 2.3, 0.7, 0.0);
    CHECK(f[0] == doctest::Approx(0.0));
    CHECK(f[1] == doctest::Approx(-2.3));
    // full reduced field vanishes at eps = 0
    pwl3d::Pwl3dParams q{-5.0, 0.1, 0.0};
    CHECK(pwl3d::reduced_field(q, 1.0, 2.0, 1.0).norm_inf() == 0.0);
    q.epsilon = 0.1;
    CHECK_THROWS_AS(pwl3d::reduced_field(q, 1.0, -1.0, 1.0), AnalysisError);
}

TEST_CASE("reduction agrees with the quotient of the cartesian field") {
    // The 3D field is exactly quadratic in eps, so divided differences at
    // eps = -1, 0, 1 recover the polar numerator/denominator coefficients
    // without truncation; the quotient expansion q1 = N1, q2 = N2 - N1 D1
    // is then compared against the transcribed reduced fields.
    const double b = -5.0, alpha = 0.13;
    double worst = 0.0;
    for (double th : {0.4, 1.3, 2.8, 3.7, 5.1})
        for (double r : {1.0, 3.0, 5.5})
            for (double z : {-2.0, 0.5, 3.0}) {
                auto field = [&](double eps) {
                    pwl3d::Pwl3dParams q{b, alpha, eps};
                    return pwl3d::cartesian_field(q, r * std::cos(th), r * std::sin(th), z).value;
                };
                const Vec fp = field(1.0), fm = field(-1.0), f0 = field(0.0);
                const Vec lin = 0.5 * (fp - fm);
                const Vec quad = 0.5 * (fp + fm) - f0;
                const double c = std::cos(th), s = std::sin(th);
                auto polar = [&](const Vec& f) {
                    // (radial numerator, angular denominator, vertical numerator)
                    return Vec{c * f[0] + s * f[1], (c * f[1] - s * f[0]) / r, f[2]};
                };
                const Vec p1 = polar(lin), p2 = polar(quad);
                const Vec q1{p1[0], p1[2]};
                const Vec q2{p2[0] - p1[0] * p1[1], p2[2] - p1[2] * p1[1]};
                pwl3d::Pwl3dParams qa{b, alpha, 1.0}, qb{b, alpha, -1.0};
                const Vec fa = pwl3d::reduced_field(qa, th, r, z);
                const Vec fb = pwl3d::reduced_field(qb, th, r, z);
                const Vec F1 = 0.5 * (fa - fb), F2 = 0.5 * (fa + fb);
                worst = std::max(worst, (q1 - F1).norm_inf());
                worst = std::max(worst, (q2 - F2).norm_inf());
            }
    CHECK(worst <= 1e-8);
}

TEST_CASE("closed-form bifurcation functions: spot values and poles") {
    const auto mp = pwl3d::oracle_delta({-5.0, 0.0, 0.0}, M_PI, 1.0);
    CHECK(mp.delta1.norm_inf() < 1e-14);
    CHECK((mp.delta2 - (mp.g2_smooth + mp.g2_jump)).norm_inf() == 0.0);
    CHECK(mp.g2_jump.norm_inf() == 0.0);
    CHECK_THROWS_AS(pwl3d::oracle_delta({-5.0, 0.0, 0.0}, 0.0, 1.0), AnalysisError);
}

TEST_CASE("quadrature matches the closed forms on a sample of the acceptance grid") {
    auto sys = pwl3d::make_reduced(-5.0, 2);
    double e1 = 0.0, e2 = 0.0;
    for (double alpha : {-0.25, 0.25})
        for (double r : {1.0, 3.5, 6.0})
            for (double z : {-3.0, 4.0}) {
                ParameterPoint p{alpha, 0.0, {{"b", -5.0}}};
                const MelnikovPair got = melnikov_pair(sys, Vec{r, z}, p);
                const MelnikovPair want = pwl3d::oracle_delta({-5.0, alpha, 0.0}, r, z);
                e1 = std::max(e1, (got.delta1 - want.delta1).norm_inf());
                e2 = std::max(e2, (got.delta2 - want.delta2).norm_inf());
            }
    CHECK(e1 <= 1e-8);
    CHECK(e2 <= 1e-6);
}

TEST_CASE("fixed-point curve formulas") {
    const auto fp = pwl3d::oracle_fixed_point(0.0, -5.0);
    CHECK(fp.r0 == doctest::Approx(M_PI).epsilon(1e-14));
    CHECK(fp.z0 == doctest::Approx(1.0).epsilon(1e-14));
    CHECK_THROWS_AS(pwl3d::oracle_fixed_point(1.0 - 16.0 / kPi2, -5.0), AnalysisError);
}

TEST_CASE("first-order corrections are consistent with an independent derivation") {
    // sigma_1 = -A1(alpha)^{-1} Delta2(sigma_0; alpha): both sides closed-form
    for (double alpha : {-0.17, 0.02, 0.31}) {
        for (double b : {-5.0, 1.0, 4.0}) {
            const auto fp = pwl3d::oracle_fixed_point(alpha, b);
            const Mat a1(2, 2, {kPi * alpha / 2.0 - kPi / 2.0, -2.0, 2.0, kPi / 2.0});
            const Vec d2 = pwl3d::oracle_delta({b, alpha, 0.0}, fp.r0, fp.z0).delta2;
            const Vec sig1 = -1.0 * solve(a1, d2);
            CHECK(fp.R1 == doctest::Approx(sig1[0]).epsilon(1e-10));
            CHECK(fp.S1 == doctest::Approx(sig1[1]).epsilon(1e-10));
        }
    }
}

TEST_CASE("spectral and normal-form constants") {
    const auto oc = pwl3d::oracle_ns({-5.0, 0.0, 0.0});
    CHECK(oc.a_alpha == 0.0);
    CHECK(oc.b_alpha == doctest::Approx(std::sqrt(64.0 - 4.0 * kPi2) / 4.0));
    CHECK(oc.a_prime0 == doctest::Approx(kPi / 4.0));
    CHECK(pwl3d::oracle_ns({-5.0, 2.0, 0.0}).b_alpha == doctest::Approx(2.0));
    CHECK(oc.ell11 == 0.0);
    // second-order coefficient is half the real part of the cubic coefficient
    CHECK(oc.ell12 == doctest::Approx(0.5 * oc.re_g21));
    // sign of the second-order coefficient is opposite to the sign of b
    CHECK(pwl3d::oracle_ns({-5.0, 0.0, 0.0}).ell12 > 0.0);
    CHECK(pwl3d::oracle_ns({5.0, 0.0, 0.0}).ell12 < 0.0);
    CHECK(pwl3d::oracle_ns({1.0, 0.0, 0.0}).ell12 ==
          doctest::Approx(-2.0 * (kPi2 - 6.0) / (kPi * kDen * std::sqrt(16.0 - kPi2))));
}

TEST_CASE("nonzero b is required") {
    // the family is parameterized by a nonzero b; the oracle formulas degrade
    // gracefully but the factories document b != 0
    const auto oc = pwl3d::oracle_ns({0.0, 0.0, 0.0});
    CHECK(oc.ell12 == 0.0);  // degenerate family boundary
}
