#pragma once

// Built-in 3D piecewise linear family and its planar reduction, together with
// the closed-form reference quantities used to validate the generic pipeline.
//
// Cartesian form (state (x, y, z), zones split by the sign of y):
//
//   upper (y > 0):  v' = (-y, x, 0) + eps (A+ v + c+)
//   lower (y < 0):  v' = (-y, x, 0) + eps A- v + eps^2 B- v
//
// The reduction to cylindrical coordinates (x, y) = (r cos th, r sin th) with
// the angle th as independent variable gives a standard-form planar system in
// (r, z) over one revolution, registered here as "pwl3d".  Note the upper
// zone carries the affine offset c+ = (0, (pi^2+4)/4, -5/2); dropping it
// decouples the two representations (the quotient cross-check in the tests
// pins this down).

#include <cmath>

#include "tscope/melnikov.hpp"
#include "tscope/model.hpp"

namespace tscope::pwl3d {

struct Pwl3dParams {
    double b = -5.0;  // must be nonzero
    double alpha = 0.0;
    double epsilon = 0.0;
};

namespace detail {
inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;
inline const double kPi2 = kPi * kPi;
inline const double kDen = 8.0 + 9.0 * kPi2;     // 8 + 9 pi^2
inline const double kAff = (kPi2 + 4.0) / 4.0;   // upper-zone affine offset in y'

inline double kappa(double b) { return 4.0 * kPi2 * b / kDen; }

// Upper-zone helpers: U = -r sin th - z + (pi^2+4)/4, Q = (kappa z sin th + U cos th)/r.
inline double upperU(double th, double r, double z) { return -r * std::sin(th) - z + kAff; }

inline Vec f1_upper(double th, double r, double z, double b) {
    const double s = std::sin(th), c = std::cos(th);
    return {upperU(th, r, z) * s - kappa(b) * z * c, 0.5 * (z - 5.0)};
}

inline Vec f2_upper(double th, double r, double z, double b) {
    const double s = std::sin(th), c = std::cos(th);
    const double P = upperU(th, r, z) * s - kappa(b) * z * c;
    const double Q = (kappa(b) * z * s + upperU(th, r, z) * c) / r;
    return {-P * Q, -0.5 * (z - 5.0) * Q};
}

inline Vec f1_lower(double th, double r, double z, double alpha) {
    const double s = std::sin(th), c = std::cos(th);
    return {c * (alpha * r * c + 4.0 * r * s - z), -r * s};
}

// Lower-zone second order split into the quotient part and the eps^2 matrix
// contribution w = B v, v = (r cos th, r sin th, z); nominal B has only the
// (2,3) entry b, perturbations add a full 3x3 delta.
inline Vec f2_lower(double th, double r, double z, double alpha, const Mat& bmat) {
    const double s = std::sin(th), c = std::cos(th);
    const double W = z - alpha * r * c - 4.0 * r * s;
    const Vec v3{r * c, r * s, z};
    const Vec w = bmat * v3;
    return {std::sin(2.0 * th) * W * W / (2.0 * r) + c * w[0] + s * w[1], s * s * W + w[2]};
}

inline Mat f1_upper_jac(double th, double, double, double b) {
    const double s = std::sin(th), c = std::cos(th);
    return Mat(2, 2, {-s * s, -s - kappa(b) * c, 0.0, 0.5});
}

inline Mat f1_lower_jac(double th, double, double, double alpha) {
    const double s = std::sin(th), c = std::cos(th);
    return Mat(2, 2, {c * (alpha * c + 4.0 * s), -c, -s, 0.0});
}

inline Mat f2_upper_jac(double th, double r, double z, double b) {
    const double s = std::sin(th), c = std::cos(th);
    const double U = upperU(th, r, z);
    const double P = U * s - kappa(b) * z * c;
    const double Q = (kappa(b) * z * s + U * c) / r;
    const double Pr = -s * s, Pz = -s - kappa(b) * c;
    const double Qr = (-s * c - Q) / r;  // d/dr of (kz s + U c)/r via dU/dr = -s
    const double Qz = (kappa(b) * s - c) / r;
    const double Z = 0.5 * (z - 5.0);
    return Mat(2, 2, {-(Pr * Q + P * Qr), -(Pz * Q + P * Qz), -Z * Qr, -(0.5 * Q + Z * Qz)});
}

inline Mat f2_lower_jac(double th, double r, double z, double alpha, const Mat& bmat) {
    const double s = std::sin(th), c = std::cos(th);
    const double s2 = std::sin(2.0 * th);
    const double W = z - alpha * r * c - 4.0 * r * s;
    const double Wr = -alpha * c - 4.0 * s;
    Mat out(2, 2);
    out(0, 0) = s2 * (W * Wr / r - W * W / (2.0 * r * r));
    out(0, 1) = s2 * W / r;
    out(1, 0) = s * s * Wr;
    out(1, 1) = s * s;
    // w = B (r c, r s, z): dw/dr = B (c, s, 0), dw/dz = B (0, 0, 1)
    const Vec wr = bmat * Vec{c, s, 0.0};
    const Vec wz = bmat * Vec{0.0, 0.0, 1.0};
    out(0, 0) += c * wr[0] + s * wr[1];
    out(0, 1) += c * wz[0] + s * wz[1];
    out(1, 0) += wr[2];
    out(1, 1) += wz[2];
    return out;
}

inline Mat a_plus(double b) {
    return Mat(3, 3, {0.0, 0.0, -kappa(b), 0.0, -1.0, -1.0, 0.0, 0.0, 0.5});
}
inline Mat a_minus(double alpha) {
    return Mat(3, 3, {alpha, 4.0, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0});
}
inline Mat b_minus(double b) {
    Mat m(3, 3);
    m(1, 2) = b;
    return m;
}

}  // namespace detail

// --- standalone closed-form evaluators -------------------------------------

inline FieldEval cartesian_field(const Pwl3dParams& q, double x, double y, double z) {
    using namespace detail;
    FieldEval out;
    out.zone = y > 0.0 ? 0 : 1;
    out.on_boundary = std::abs(y) <= 1e-12 * std::max(1.0, std::abs(x));
    const Vec v{x, y, z};
    Vec f = Vec{-y, x, 0.0};
    if (out.zone == 0) {
        Vec lin = a_plus(q.b) * v;
        lin += Vec{0.0, kAff, -2.5};
        f += q.epsilon * lin;
    } else {
        f += q.epsilon * (a_minus(q.alpha) * v) + (q.epsilon * q.epsilon) * (b_minus(q.b) * v);
    }
    out.value = f;
    return out;
}

inline Vec reduced_field(const Pwl3dParams& q, double theta, double r, double z) {
    using namespace detail;
    if (r <= 0.0) throw AnalysisError("pwl3d: reduced field requires r > 0");
    const double th = std::fmod(theta, kTwoPi) < 0 ? std::fmod(theta, kTwoPi) + kTwoPi
                                                   : std::fmod(theta, kTwoPi);
    const bool upper = th < kPi;
    const Vec f1 = upper ? f1_upper(th, r, z, q.b) : f1_lower(th, r, z, q.alpha);
    const Vec f2 = upper ? f2_upper(th, r, z, q.b)
                         : f2_lower(th, r, z, q.alpha, b_minus(q.b));
    return q.epsilon * f1 + (q.epsilon * q.epsilon) * f2;
}

// Printed first- and second-order bifurcation functions of the reduction.
inline MelnikovPair oracle_delta(const Pwl3dParams& q, double r, double z) {
    using namespace detail;
    if (r == 0.0) throw AnalysisError("pwl3d: Delta2 closed form has a 1/r pole");
    const double a = q.alpha, b = q.b;
    MelnikovPair mp;
    mp.delta1 = {kPi * a * r / 2.0 + 0.5 * (-kPi * r - 4.0 * z + kPi2 + 4.0),
                 2.0 * r + kPi / 2.0 * (z - 5.0)};
    const double d2_1 =
        (kPi * (a * (kPi * (a - 2.0) + 8.0) - 4.0) * r - 8.0 * z * ((kPi - 2.0) * a + 2.0 * b) +
         2.0 * kPi * (kPi2 + 4.0) * a) / 8.0 +
        kPi / 8.0 * (kPi * (32.0 * b * (3.0 * z - 5.0) / kDen + r - kPi) + 16.0);
    const double d2_2 =
        kPi * (0.5 * (a - 2.0) * r + z + kPi) +
        kPi2 / 8.0 * (z - 5.0) * (1.0 - 32.0 * b * z / (kDen * r)) + 8.0 * r - 4.0 * z + 4.0;
    mp.delta2 = {d2_1, d2_2};
    mp.g2_smooth = mp.delta2;  // constant switching times: no jump correction
    mp.g2_jump = Vec(2);
    return mp;
}

struct FixedPointOracle {
    double r0 = 0.0, z0 = 0.0;  // zero of the first-order function
    double R1 = 0.0, S1 = 0.0;  // first-order corrections of the fixed point
};

inline FixedPointOracle oracle_fixed_point(double alpha, double b) {
    using namespace detail;
    const double a = alpha;
    const double den = kPi2 * (a - 1.0) + 16.0;
    if (std::abs(den) < 1e-12) throw AnalysisError("pwl3d: fixed-point formula pole");
    FixedPointOracle fp;
    fp.r0 = kPi * (16.0 - kPi2) / den;
    fp.z0 = (kPi2 * (5.0 * a - 1.0) + 16.0) / den;

    const double p = kPi, p2 = kPi2;
    const double p3 = p2 * p, p4 = p2 * p2, p5 = p4 * p, p6 = p4 * p2, p7 = p6 * p;
    const double r1 =
        8.0 * p5 * (17.0 * a - 35.0) * a -
        16.0 * p4 * (a * (45.0 * a - 25.0 * b + 149.0) + 13.0 * b - 196.0) -
        128.0 * p2 * (-29.0 * b + 302.0 + 5.0 * a * (a + 3.0 * b + 7.0)) -
        2048.0 * (a + 3.0 * (b + 6.0)) -
        9.0 * p7 * (a - 1.0) * a +
        128.0 * p3 * (a + 16.0) * a +
        2048.0 * p * a +
        36.0 * p6 * (2.0 * a - 1.0);
    const double z1 =
        128.0 * p2 * (a * (5.0 * a - 9.0 * b + 7.0) - 21.0 * b + 14.0) -
        16.0 * p4 * (a * (10.0 * a * (b - 4.0) + 13.0 * b + 89.0) - 11.0 * b - 119.0) +
        2048.0 * (a - b) -
        9.0 * p7 * (a - 1.0) -
        18.0 * p6 * (5.0 * (a - 2.0) * a + 7.0) +
        8.0 * p5 * (17.0 * a - 35.0) +
        128.0 * p3 * (a + 16.0) +
        2048.0 * p;
    fp.R1 = p * r1 / (4.0 * kDen * den * den);
    fp.S1 = z1 / (kDen * den * den);
    return fp;
}

struct NsOracle {
    double a_alpha = 0.0;      // real eigenvalue rate a(alpha)
    double b_alpha = 0.0;      // imaginary rate b(alpha)
    double a_prime0 = 0.0;     // a'(0)
    double beta1 = 0.0;        // beta(eps) = beta1 eps + O(eps^2)
    double ell11 = 0.0;        // first-order Lyapunov coefficient (vanishes here)
    double ell12 = 0.0;        // second-order Lyapunov coefficient
    double re_g20 = 0.0, re_g11 = 0.0, re_g02 = 0.0, re_g21 = 0.0;  // eps^2 parts
    Mat frame0;                // leading normalizing frame
    Mat frame1;                // its first-order correction
};

// Closed forms for the reduced family.  beta1 follows from the trace/
// determinant expansion of the map Jacobian at the fixed-point curve,
//   det DP = 1 + eps tr A1(alpha) + eps^2 (det A1 + tr A2) + O(eps^3),
// with A1, A2 the Jacobians of the first- and second-order bifurcation
// functions; this gives beta1 = -(24 b / (8+9pi^2) + 1).  The g-coefficients
// are the eps^2 parts with the bilinear/trilinear forms taken as the true
// second and third derivatives of the map, expressed in the unit-determinant
// normalizing frame used by the analysis pipeline.
inline NsOracle oracle_ns(const Pwl3dParams& q) {
    using namespace detail;
    NsOracle o;
    const double b = q.b, a = q.alpha;
    o.a_alpha = kPi * a / 4.0;
    o.b_alpha = std::sqrt(64.0 - kPi2 * (a - 2.0) * (a - 2.0)) / 4.0;
    o.a_prime0 = kPi / 4.0;
    o.beta1 = -(24.0 * b / kDen + 1.0);
    const double s16 = std::sqrt(16.0 - kPi2);
    const double sq2 = std::sqrt(2.0);
    const double s0 = std::sqrt(s16);  // unit-determinant rescale of the frame below
    o.ell11 = 0.0;
    o.ell12 = -2.0 * (kPi2 - 6.0) * b / (kPi * kDen * s16);
    o.re_g20 = -8.0 * b * (kPi2 + 4.0) / (sq2 * kPi * kDen * s0);
    o.re_g11 = (32.0 - 2.0 * kPi2) * b / (sq2 * kPi * kDen * s0);
    o.re_g02 = (12.0 * kPi2 - 32.0) * b / (sq2 * kPi * kDen * s0);
    o.re_g21 = -4.0 * b * (kPi2 - 6.0) / (kPi * kDen * s16);
    o.frame0 = Mat(2, 2, {-kPi / 2.0, -s16 / 2.0, 2.0, 0.0});
    o.frame1 = Mat(2, 2, {-16.0 * kPi * b / kDen - kPi2 / 4.0 + kPi + 2.0,
                          s16 * (-16.0 * b - (kPi - 4.0) * kDen) / (4.0 * kDen), 0.0, 0.0});
    return o;
}

// --- system factories -------------------------------------------------------

// Planar reduction, standard form, period 2 pi, constant switching times
// {0, pi}.  The parameter b is read from ParameterPoint extras so CLI
// overrides apply without rebuilding; delta_bminus perturbs the eps^2 matrix.
inline PiecewiseSystem make_reduced(double b_default = -5.0, int order = 2,
                                    const Mat& delta_bminus = Mat(3, 3)) {
    using namespace detail;
    PiecewiseSystem sys;
    sys.name = "pwl3d";
    sys.dim = 2;
    sys.period = kTwoPi;
    sys.order = order;
    sys.alpha_lo = -0.5;
    sys.alpha_hi = 0.5;
    sys.eps_max = 0.5;
    sys.domain_lo = {-20.0, -20.0};
    sys.domain_hi = {20.0, 20.0};
    sys.switchers.push_back(constant_switcher(kPi));

    auto bval = [b_default](const ParameterPoint& p) { return p.extra("b", b_default); };

    ZoneField upper;
    upper.terms.push_back([bval](double th, const Vec& x, const ParameterPoint& p) {
        return f1_upper(th, x[0], x[1], bval(p));
    });
    upper.term_jacobians.push_back([bval](double th, const Vec& x, const ParameterPoint& p) {
        return f1_upper_jac(th, x[0], x[1], bval(p));
    });
    if (order >= 2) {
        upper.terms.push_back([bval](double th, const Vec& x, const ParameterPoint& p) {
            return f2_upper(th, x[0], x[1], bval(p));
        });
        upper.term_jacobians.push_back([bval](double th, const Vec& x, const ParameterPoint& p) {
            return f2_upper_jac(th, x[0], x[1], bval(p));
        });
    }

    ZoneField lower;
    lower.terms.push_back([](double th, const Vec& x, const ParameterPoint& p) {
        return f1_lower(th, x[0], x[1], p.alpha);
    });
    lower.term_jacobians.push_back([](double th, const Vec& x, const ParameterPoint& p) {
        return f1_lower_jac(th, x[0], x[1], p.alpha);
    });
    if (order >= 2) {
        lower.terms.push_back([bval, delta_bminus](double th, const Vec& x, const ParameterPoint& p) {
            return f2_lower(th, x[0], x[1], p.alpha, b_minus(bval(p)) + delta_bminus);
        });
        lower.term_jacobians.push_back([bval, delta_bminus](double th, const Vec& x, const ParameterPoint& p) {
            return f2_lower_jac(th, x[0], x[1], p.alpha, b_minus(bval(p)) + delta_bminus);
        });
    }

    sys.zones.push_back(std::move(upper));
    sys.zones.push_back(std::move(lower));
    sys.validate();
    return sys;
}

// Raw 3D form with the rotation drift, zones split by sign(y).  Used for
// simulation and Poincare-section output; the planar analysis pipeline runs
// on the reduction above.
inline PiecewiseSystem make_cartesian(double b_default = -5.0,
                                      const Mat& delta_bminus = Mat(3, 3)) {
    using namespace detail;
    PiecewiseSystem sys;
    sys.name = "pwl3d-cartesian";
    sys.dim = 3;
    sys.period = kTwoPi;
    sys.order = 2;
    sys.eps_max = 0.5;
    sys.domain_lo = {-40.0, -40.0, -40.0};
    sys.domain_hi = {40.0, 40.0, 40.0};

    SwitchingFunction sw;
    sw.kind = SwitchingFunction::Kind::state_surface;
    sw.value = [](const Vec& x, const ParameterPoint&) { return x[1]; };
    sw.gradient = [](const Vec& x, const ParameterPoint&) {
        Vec g(x.size());
        g[1] = 1.0;
        return g;
    };
    sys.switchers.push_back(std::move(sw));

    auto rotation = [](double, const Vec& v, const ParameterPoint&) {
        return Vec{-v[1], v[0], 0.0};
    };
    auto rotation_jac = [](double, const Vec&, const ParameterPoint&) {
        return Mat(3, 3, {0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0});
    };
    auto bval = [b_default](const ParameterPoint& p) { return p.extra("b", b_default); };
    auto zero3 = [](double, const Vec&, const ParameterPoint&) { return Vec(3); };
    auto zero3j = [](double, const Vec&, const ParameterPoint&) { return Mat(3, 3); };

    ZoneField upper;
    upper.base = rotation;
    upper.base_jacobian = rotation_jac;
    upper.terms.push_back([bval](double, const Vec& v, const ParameterPoint& p) {
        return a_plus(bval(p)) * v + Vec{0.0, kAff, -2.5};
    });
    upper.term_jacobians.push_back([bval](double, const Vec&, const ParameterPoint& p) {
        return a_plus(bval(p));
    });
    upper.terms.push_back(zero3);
    upper.term_jacobians.push_back(zero3j);

    ZoneField lower;
    lower.base = rotation;
    lower.base_jacobian = rotation_jac;
    lower.terms.push_back([](double, const Vec& v, const ParameterPoint& p) {
        return a_minus(p.alpha) * v;
    });
    lower.term_jacobians.push_back([](double, const Vec&, const ParameterPoint& p) {
        return a_minus(p.alpha);
    });
    lower.terms.push_back([bval, delta_bminus](double, const Vec& v, const ParameterPoint& p) {
        return (b_minus(bval(p)) + delta_bminus) * v;
    });
    lower.term_jacobians.push_back([bval, delta_bminus](double, const Vec&, const ParameterPoint& p) {
        return b_minus(bval(p)) + delta_bminus;
    });

    sys.zones.push_back(std::move(upper));
    sys.zones.push_back(std::move(lower));
    sys.validate();
    return sys;
}

namespace detail {
inline int order_or(int order, int fallback) { return order > 0 ? order : fallback; }

inline const BuiltinRegistrar reg_reduced{
    "pwl3d", [](const std::map<std::string, double>& params, int order) {
        auto it = params.find("b");
        return make_reduced(it == params.end() ? -5.0 : it->second, order_or(order, 2));
    }};
inline const BuiltinRegistrar reg_cartesian{
    "pwl3d-cartesian", [](const std::map<std::string, double>& params, int) {
        auto it = params.find("b");
        return make_cartesian(it == params.end() ? -5.0 : it->second);
    }};
}  // namespace detail

}  // namespace tscope::pwl3d
