#include <doctest.h>

#include <cmath>

#include "tscope/pwl3d.hpp"
#include "tscope/tmap.hpp"
#include "test_systems.hpp"

using namespace tscope;

namespace {
// x' = eps (x1^2, x1 x2) / T: the first-order map deviation is the quadratic
// map (x1^2, x1 x2) with bilinear components B1 = [[2,0],[0,0]], B2 = [[0,1],[1,0]].
PiecewiseSystem quadratic_toy() {
    PiecewiseSystem sys;
    sys.dim = 2;
    sys.period = 2.0 * M_PI;
    sys.order = 1;
    sys.domain_lo = {-5.0, -5.0};
    sys.domain_hi = {5.0, 5.0};
    const double w = 1.0 / sys.period;
    ZoneField z;
    z.terms.push_back([w](double, const Vec& x, const ParameterPoint&) {
        return Vec{w * x[0] * x[0], w * x[0] * x[1]};
    });
    z.term_jacobians.push_back([w](double, const Vec& x, const ParameterPoint&) {
        return Mat(2, 2, {2.0 * w * x[0], 0.0, w * x[1], w * x[0]});
    });
    sys.zones.push_back(std::move(z));
    sys.validate();
    return sys;
}
}  // namespace

TEST_CASE("map at eps = 0 is the identity with trivial derivatives") {
    auto sys = pwl3d::make_reduced(-5.0, 2);
    ParameterPoint p{0.0, 0.0, {{"b", -5.0}}};
    const Vec x{2.0, 1.0};
    CHECK((time_t_map(sys, x, p) - x).norm_inf() < 1e-14);
    const MapSample ms = derivatives_at(sys, x, p);
    CHECK((ms.jacobian - Mat::identity(2)).norm_inf() < 1e-12);
    double bmax = 0.0, cmax = 0.0;
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                bmax = std::max(bmax, std::abs(ms.bilinear.at(c, i, j)));
                for (int k = 0; k < 2; ++k) cmax = std::max(cmax, std::abs(ms.trilinear.at(c, i, j, k)));
            }
    CHECK(bmax < 1e-7);
    CHECK(cmax < 1e-5);
}

TEST_CASE("bilinear form of the quadratic toy is recovered") {
    auto sys = quadratic_toy();
    const double eps = 1e-4;
    ParameterPoint p{0.0, eps, {}};
    DerivativeScheme sch;
    sch.deviation_scale = eps;
    const MapSample ms = derivatives_at(sys, Vec{0.4, -0.3}, p, sch);
    Tensor3 want(2);
    want.at(0, 0, 0) = 2.0 * eps;
    want.at(1, 0, 1) = want.at(1, 1, 0) = 1.0 * eps;
    double err = 0.0;
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                err = std::max(err, std::abs(ms.bilinear.at(c, i, j) - want.at(c, i, j)));
    CHECK(err <= 1e-6);
}

TEST_CASE("tensor storage is symmetric by construction") {
    auto sys = quadratic_toy();
    ParameterPoint p{0.0, 1e-3, {}};
    const MapSample ms = derivatives_at(sys, Vec{0.4, -0.3}, p);
    for (int c = 0; c < 2; ++c) {
        CHECK(ms.bilinear.at(c, 0, 1) == ms.bilinear.at(c, 1, 0));
        CHECK(ms.trilinear.at(c, 0, 0, 1) == ms.trilinear.at(c, 0, 1, 0));
        CHECK(ms.trilinear.at(c, 0, 0, 1) == ms.trilinear.at(c, 1, 0, 0));
    }
    const Vec u{0.7, -0.2}, v{-0.4, 1.1};
    CHECK((ms.bilinear.apply(u, v) - ms.bilinear.apply(v, u)).norm_inf() == 0.0);
}

TEST_CASE("map eigenvalues near the fixed point carry the predicted rotation rate") {
    const double b = -5.0, eps = 1e-2;
    auto sys = pwl3d::make_reduced(b, 2);
    const auto fp = pwl3d::oracle_fixed_point(0.0, b);
    ParameterPoint p{0.0, eps, {{"b", b}}};
    // seed from the expansion, polish with a few Newton steps on the map
    Vec x{fp.r0 + eps * fp.R1, fp.z0 + eps * fp.S1};
    FlowOptions fo;
    fo.abs_tol = fo.rel_tol = 1e-12;
    for (int it = 0; it < 20; ++it) {
        auto [tr, J] = flow_with_variationals(sys, x, p, sys.period, fo);
        const Vec g = tr.end_state - x;
        if (g.norm_inf() < 1e-12) break;
        x = x - solve(J - Mat::identity(2), g);
    }
    const Mat J = time_t_map_jacobian(sys, x, p, fo);
    const EigenPair2 e = eigen2(J);
    REQUIRE(e.complex_pair);
    const double b0 = pwl3d::oracle_ns({b, 0.0, eps}).b_alpha;  // b(alpha = 0)
    CHECK(e.lambda.imag() == doctest::Approx(eps * b0).epsilon(0.05));
}

TEST_CASE("stencil clearance against the domain box is enforced") {
    auto sys = quadratic_toy();
    ParameterPoint p{0.0, 1e-3, {}};
    CHECK_THROWS_AS(derivatives_at(sys, Vec{4.9999, 0.0}, p), AnalysisError);
}

TEST_CASE("finite-difference Jacobian path matches the variational one") {
    auto sys = pwl3d::make_reduced(-5.0, 2);
    ParameterPoint p{0.05, 0.01, {{"b", -5.0}}};
    DerivativeScheme var;
    DerivativeScheme fd;
    fd.variational_jacobian = false;
    const Vec x{2.6, 1.3};
    const MapSample a = derivatives_at(sys, x, p, var);
    const MapSample c = derivatives_at(sys, x, p, fd);
    CHECK((a.jacobian - c.jacobian).norm_inf() < 1e-6);
}
