#pragma once

// Neimark-Sacker analysis of the time-T map as a near-identity family:
// fixed-point curve sigma(alpha, eps), eigenvalue rates a(alpha) + i b(alpha),
// critical parameter beta(eps) with |lambda(beta(eps), eps)| = 1, normalizing
// frame, normal-form coefficients g20/g11/g02/g21, the coefficient c1, the
// first Lyapunov coefficient and its expansion in eps.

#include <array>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "tscope/melnikov.hpp"
#include "tscope/tmap.hpp"

namespace tscope {

using cplx = std::complex<double>;

struct NsOptions {
    double newton_tol = 1e-11;
    int newton_max_iter = 50;
    double beta_tol = 1e-9;        // | |lambda| - 1 | at the solved beta
    double resonance_tol = 1e-6;   // |e^{ik theta} - 1| guard, k = 1..4
    double delta_probe_tol = 1e-8; // leading-order detection threshold
    FlowOptions flow = {.abs_tol = 1e-12, .rel_tol = 1e-12};
    std::vector<double> eps_fit = {0.005, 0.0075, 0.01};  // for eigen-rate fits
};

enum class Verdict { supercritical_attracting_curve, subcritical_repelling_curve, inconclusive };

inline std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::supercritical_attracting_curve: return "supercritical-attracting-curve";
        case Verdict::subcritical_repelling_curve: return "subcritical-repelling-curve";
        default: return "inconclusive";
    }
}

struct FixedPointCurve {
    std::vector<double> alpha_grid;
    std::vector<Vec> points;
    std::vector<double> newton_residuals;
};

struct EigenData {
    std::vector<double> alphas;
    std::vector<cplx> lambda;     // lambda(alpha, eps_ref)
    std::vector<double> a, b;     // leading eps-rates per alpha
    std::vector<double> c;        // next-order real rate (degeneracy diagnostics)
    std::vector<double> rho;      // (|lambda|^2 - 1) / eps^r at eps_ref
    double eps_ref = 0.0;
    int r = 1;
    double alpha0 = 0.0;          // zero of a(alpha)
    double a_prime_alpha0 = 0.0;
    double b0 = 0.0;
    double theta_eps = 0.0;       // arg lambda at alpha0, eps_ref
    std::array<bool, 4> resonance_flags{};
};

struct NSReport {
    int r = 1;                 // leading order of the map deviation
    double eps = 0.0;
    double alpha0 = 0.0;
    double a_prime_alpha0 = 0.0;
    double b0 = 0.0;
    double beta_eps = 0.0;
    Vec sigma;                 // fixed point at (beta(eps), eps)
    cplx lambda;               // map eigenvalue there
    double theta_eps = 0.0;
    Mat normal_frame;
    cplx g20, g11, g02, g21, c1;
    double ell1 = 0.0;           // Re(e^{-i theta} c1)
    double ell1_expanded = 0.0;  // same value through the expanded formula
    double ell1_noise = 0.0;     // differencing noise estimate
    double ell11 = 0.0, ell12 = 0.0, fit_residual = 0.0;  // eps-series fit
    bool series_fitted = false;
    std::array<bool, 4> resonance_flags{};
    Verdict verdict = Verdict::inconclusive;
};

// --- leading order and guiding-system helpers -------------------------------

// r = 1 when the first-order function is visibly nonzero on a probe grid,
// else 2 (orders above 2 are not carried).
inline int detect_leading_order(const PiecewiseSystem& sys, const ParameterPoint& p,
                                double tol = 1e-8) {
    double biggest = 0.0;
    for (int i = 1; i <= 3; ++i)
        for (int j = 1; j <= 3; ++j) {
            Vec x(sys.dim);
            x[0] = sys.domain_lo[0] + (sys.domain_hi[0] - sys.domain_lo[0]) * i / 4.0;
            if (sys.dim > 1) x[1] = sys.domain_lo[1] + (sys.domain_hi[1] - sys.domain_lo[1]) * j / 4.0;
            biggest = std::max(biggest, averaged_g1(sys, x, p).norm_inf());
        }
    return biggest > tol ? 1 : 2;
}

inline Vec leading_delta(const PiecewiseSystem& sys, const Vec& x, const ParameterPoint& p, int r) {
    if (r == 1) return averaged_g1(sys, x, p);
    return averaged_g2(sys, x, p) + jump_correction_g2(sys, x, p);
}

// Newton zero of the leading bifurcation function; used at eps = 0 and as the
// fixed-point seed.
inline Vec newton_on_delta(const PiecewiseSystem& sys, Vec guess, const ParameterPoint& p, int r,
                           const NsOptions& opt = {}) {
    for (int it = 0; it < opt.newton_max_iter; ++it) {
        const Vec g = leading_delta(sys, guess, p, r);
        if (g.norm_inf() < 1e-12) return guess;
        const Mat J = PiecewiseSystem::fd_jacobian(
            [&](const Vec& y) { return leading_delta(sys, y, p, r); }, guess);
        try {
            guess = guess - solve(J, g);
        } catch (const std::domain_error&) {
            throw AnalysisError("newton_on_delta: singular Jacobian of the leading function");
        }
    }
    if (leading_delta(sys, guess, p, r).norm_inf() < 1e-9) return guess;
    throw AnalysisError("newton_on_delta: no zero of the leading bifurcation function found");
}

// --- fixed points ------------------------------------------------------------

// Damped Newton on P(x) - x with the variational Jacobian.  At eps = 0 every
// point is fixed, so the zero of the leading bifurcation function is returned
// instead.
inline Vec find_fixed_point(const PiecewiseSystem& sys, const Vec& guess, const ParameterPoint& p,
                            const NsOptions& opt = {}, int r_hint = 0) {
    if (p.epsilon == 0.0) {
        const int r = r_hint > 0 ? r_hint : detect_leading_order(sys, p);
        return newton_on_delta(sys, guess, p, r, opt);
    }
    Vec x = guess;
    double resid = std::numeric_limits<double>::infinity();
    for (int it = 0; it < opt.newton_max_iter; ++it) {
        auto [tr, J] = flow_with_variationals(sys, x, p, sys.period, opt.flow);
        const Vec g = tr.end_state - x;
        if (g.norm_inf() <= opt.newton_tol) return x;
        Mat A = J - Mat::identity(sys.dim);
        Vec step;
        try {
            step = solve(A, g);
        } catch (const std::domain_error&) {
            throw AnalysisError("find_fixed_point: singular Newton matrix (eigenvalue 1)");
        }
        double damp = 1.0;
        Vec x_new = x - step;
        for (int half = 0; half < 8; ++half) {
            const Vec g_new = time_t_map(sys, x_new, p, opt.flow) - x_new;
            if (g_new.norm_inf() <= g.norm_inf() || g_new.norm_inf() <= opt.newton_tol) break;
            damp *= 0.5;
            x_new = x - damp * step;
        }
        x = x_new;
        resid = g.norm_inf();
    }
    const Vec g = time_t_map(sys, x, p, opt.flow) - x;
    if (g.norm_inf() <= opt.newton_tol) return x;
    throw AnalysisError("find_fixed_point: Newton did not converge (last residual " +
                        std::to_string(std::max(resid, g.norm_inf())) + ")");
}

inline FixedPointCurve fixed_point_curve(const PiecewiseSystem& sys, const std::vector<double>& alphas,
                                         ParameterPoint p, Vec seed, const NsOptions& opt = {},
                                         int r_hint = 0) {
    FixedPointCurve out;
    for (double a : alphas) {
        p.alpha = a;
        const Vec s = find_fixed_point(sys, seed, p, opt, r_hint);
        out.alpha_grid.push_back(a);
        out.points.push_back(s);
        out.newton_residuals.push_back((time_t_map(sys, s, p, opt.flow) - s).norm_inf());
        seed = s;  // continuation
    }
    return out;
}

// --- eigen machinery ----------------------------------------------------------

inline EigenPair2 map_eigenpair(const PiecewiseSystem& sys, const Vec& sigma,
                                const ParameterPoint& p, const NsOptions& opt) {
    const Mat J = time_t_map_jacobian(sys, sigma, p, opt.flow);
    return eigen2(J);
}

// Leading rates from a linear fit of (lambda(alpha, eps) - 1)/eps^r in eps:
// intercept a + i b, slope c + i d.
inline EigenData eigen_rates(const PiecewiseSystem& sys, const std::vector<double>& alphas,
                             ParameterPoint p, Vec seed, int r, const NsOptions& opt = {}) {
    EigenData out;
    out.r = r;
    out.eps_ref = opt.eps_fit.back();
    if (opt.eps_fit.size() < 2) throw AnalysisError("eigen_rates: need at least two eps values");
    for (double e : opt.eps_fit)
        if (e == 0.0)
            throw AnalysisError("eigen_rates: the map is the identity at eps = 0, rates undefined");

    for (double a : alphas) {
        p.alpha = a;
        std::vector<cplx> mu;  // (lambda - 1)/eps^r per eps
        Vec sigma_ref(sys.dim);
        cplx lambda_ref;
        for (double eps : opt.eps_fit) {
            p.epsilon = eps;
            const Vec s = find_fixed_point(sys, seed, p, opt, r);
            const EigenPair2 ep = map_eigenpair(sys, s, p, opt);
            if (!ep.complex_pair)
                throw AnalysisError("eigen_rates: real eigenvalue pair at alpha = " + std::to_string(a));
            mu.push_back((ep.lambda - 1.0) / std::pow(eps, r));
            if (eps == out.eps_ref) {
                sigma_ref = s;
                lambda_ref = ep.lambda;
            }
            seed = s;
        }
        // least-squares line mu(eps) = (a + ib) + eps (c + id)
        const int m = static_cast<int>(mu.size());
        double se = 0, see = 0;
        cplx sm = 0, sem = 0;
        for (int i = 0; i < m; ++i) {
            const double e = opt.eps_fit[i];
            se += e;
            see += e * e;
            sm += mu[i];
            sem += e * mu[i];
        }
        const double det = m * see - se * se;
        const cplx slope = (static_cast<double>(m) * sem - se * sm) / det;
        const cplx intercept = (sm - slope * se) / static_cast<double>(m);

        out.alphas.push_back(a);
        out.lambda.push_back(lambda_ref);
        out.a.push_back(intercept.real());
        out.b.push_back(intercept.imag());
        out.c.push_back(slope.real());
        out.rho.push_back((std::norm(lambda_ref) - 1.0) / std::pow(out.eps_ref, r));
    }

    // alpha0 from the sign change of a(alpha); a'(alpha0) by central difference
    int k = -1;
    for (std::size_t i = 0; i + 1 < out.a.size(); ++i)
        if (out.a[i] == 0.0 || (out.a[i] < 0) != (out.a[i + 1] < 0)) {
            k = static_cast<int>(i);
            break;
        }
    if (k < 0) throw AnalysisError("eigen_rates: a(alpha) has no sign change on the grid");
    const double a0 = out.a[k], a1 = out.a[k + 1];
    const double x0 = out.alphas[k], x1 = out.alphas[k + 1];
    out.alpha0 = (a1 == a0) ? x0 : x0 - a0 * (x1 - x0) / (a1 - a0);
    out.a_prime_alpha0 = (a1 - a0) / (x1 - x0);
    const double w = (out.alpha0 - x0) / (x1 - x0);
    out.b0 = (1.0 - w) * out.b[k] + w * out.b[k + 1];

    const cplx lam = (1.0 - w) * out.lambda[k] + w * out.lambda[k + 1];
    out.theta_eps = std::arg(lam);
    for (int j = 1; j <= 4; ++j)
        out.resonance_flags[j - 1] =
            std::abs(std::exp(cplx(0.0, j * out.theta_eps)) - 1.0) < opt.resonance_tol;
    return out;
}

// --- critical parameter --------------------------------------------------------

// Root of rho(alpha, eps) = (|lambda(alpha, eps)|^2 - 1)/eps^r in alpha.
// When the order-r rate is flat (relaxed transversality), the root solve is
// rescaled by a further 1/eps so tolerances keep their meaning.
inline double solve_beta(const PiecewiseSystem& sys, double eps, double alpha0, ParameterPoint p,
                         Vec seed, int r, const NsOptions& opt = {}) {
    p.epsilon = eps;
    Vec tracker = seed;
    auto rho = [&](double alpha) {
        p.alpha = alpha;
        tracker = find_fixed_point(sys, tracker, p, opt, r);
        const EigenPair2 ep = map_eigenpair(sys, tracker, p, opt);
        if (!ep.complex_pair)
            throw AnalysisError("solve_beta: real eigenvalue pair near alpha = " + std::to_string(alpha));
        return (std::norm(ep.lambda) - 1.0) / std::pow(eps, r);
    };

    // bracket by geometric expansion around alpha0
    double lo = alpha0, hi = alpha0;
    double flo = rho(lo), fhi = flo;
    double delta = std::max(4.0 * std::abs(eps), 1e-3);
    bool bracketed = false;
    for (int it = 0; it < 24 && !bracketed; ++it) {
        lo = std::max(alpha0 - delta, sys.alpha_lo);
        hi = std::min(alpha0 + delta, sys.alpha_hi);
        flo = rho(lo);
        fhi = rho(hi);
        if ((flo < 0) != (fhi < 0)) bracketed = true;
        else if (lo == sys.alpha_lo && hi == sys.alpha_hi) break;
        else delta *= 2.0;
    }
    if (!bracketed)
        throw AnalysisError("solve_beta: no sign change of rho in the alpha interval "
                            "(transversality may be degenerate)");

    // bisection with secant acceleration
    double a = lo, b = hi, fa = flo, fb = fhi;
    for (int it = 0; it < 200; ++it) {
        const double sec = (fb != fa) ? a - fa * (b - a) / (fb - fa) : 0.5 * (a + b);
        const double m = (sec > a + 0.001 * (b - a) && sec < b - 0.001 * (b - a)) ? sec : 0.5 * (a + b);
        const double fm = rho(m);
        if ((fm < 0) == (fb < 0)) {
            b = m;
            fb = fm;
        } else {
            a = m;
            fa = fm;
        }
        if (b - a < 1e-15 * std::max(1.0, std::abs(a))) break;
    }
    const double beta = 0.5 * (a + b);
    p.alpha = beta;
    const Vec sig = find_fixed_point(sys, tracker, p, opt, r);
    const cplx lam = map_eigenpair(sys, sig, p, opt).lambda;
    if (std::abs(std::abs(lam) - 1.0) > opt.beta_tol)
        throw AnalysisError("solve_beta: | |lambda| - 1 | above tolerance at the solved beta");
    return beta;
}

// --- normalizing frame ----------------------------------------------------------

// Real 2x2 frame L with L^-1 J L in rotation-scaling form (equal diagonal,
// antisymmetric off-diagonal, positive rotation part).  Built from the complex
// eigenvector v of M = (J - Id)/eps^r as L = [Re v | -Im v] and normalized to
// unit determinant, which pins the frame up to a pure rotation: a Jacobian
// already in rotation-scaling form gets a rotation frame, so downstream
// normal-form coefficients carry identity-frame semantics.
inline Mat normalize_frame(const Mat& jacobian, double eps, int r, double check_tol = 1e-10) {
    const Mat M = (1.0 / std::pow(eps, r)) * (jacobian - Mat::identity(2));
    const EigenPair2 ep = eigen2(M);
    if (!ep.complex_pair) throw AnalysisError("normalize_frame: eigenvalues are not a complex pair");
    Mat L(2, 2, {ep.v1.real(), -ep.v1.imag(), ep.v2.real(), -ep.v2.imag()});
    const double det = L(0, 0) * L(1, 1) - L(0, 1) * L(1, 0);
    if (!(det > 0.0))
        throw AnalysisError("normalize_frame: eigenvector frame is degenerate");
    L *= 1.0 / std::sqrt(det);
    const Mat C = inverse(L) * jacobian * L;
    const Mat H(2, 2, {C(0, 0), -C(1, 0), C(1, 0), C(0, 0)});
    if ((C - H).norm_inf() > check_tol || C(1, 0) < 0.0)
        throw AnalysisError("normalize_frame: conjugated matrix not in rotation-scaling form");
    return L;
}

// --- Lyapunov coefficient --------------------------------------------------------

namespace detail {

inline std::array<cplx, 2> tensor_apply(const Tensor3& B, const std::array<cplx, 2>& u,
                                        const std::array<cplx, 2>& v) {
    std::array<cplx, 2> out{};
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) out[c] += B.at(c, i, j) * u[i] * v[j];
    return out;
}

inline std::array<cplx, 2> tensor_apply(const Tensor4& C, const std::array<cplx, 2>& u,
                                        const std::array<cplx, 2>& v, const std::array<cplx, 2>& w) {
    std::array<cplx, 2> out{};
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                for (int k = 0; k < 2; ++k) out[c] += C.at(c, i, j, k) * u[i] * v[j] * w[k];
    return out;
}

inline cplx inner(const std::array<cplx, 2>& p, const std::array<cplx, 2>& u) {
    return std::conj(p[0]) * u[0] + std::conj(p[1]) * u[1];
}

struct NormalFormCoeffs {
    cplx g20, g11, g02, g21, c1;
    double ell1_c1, ell1_expanded;
};

// Both routes to the first Lyapunov coefficient, evaluated with lambda0
// exactly on the unit circle.  On the circle the two expressions are
// algebraically identical; agreement is a cross-check of the implementation.
inline NormalFormCoeffs lyapunov_from_tensors(const Tensor3& B, const Tensor4& C, double theta,
                                              const std::array<cplx, 2>& q,
                                              const std::array<cplx, 2>& pv) {
    NormalFormCoeffs nf;
    const std::array<cplx, 2> qb{std::conj(q[0]), std::conj(q[1])};
    nf.g20 = inner(pv, tensor_apply(B, q, q));
    nf.g11 = inner(pv, tensor_apply(B, q, qb));
    nf.g02 = inner(pv, tensor_apply(B, qb, qb));
    nf.g21 = inner(pv, tensor_apply(C, q, q, qb));
    const cplx lam0 = std::exp(cplx(0.0, theta));
    nf.c1 = nf.g20 * nf.g11 * (1.0 - 2.0 * lam0) / (2.0 * (lam0 * lam0 - lam0)) +
            std::norm(nf.g11) / (1.0 - std::conj(lam0)) +
            std::norm(nf.g02) / (2.0 * (lam0 * lam0 - std::conj(lam0))) + nf.g21 / 2.0;
    nf.ell1_c1 = (std::exp(cplx(0.0, -theta)) * nf.c1).real();
    nf.ell1_expanded =
        (std::exp(cplx(0.0, -theta)) * nf.g21 / 2.0).real() -
        ((1.0 - 2.0 * lam0) * std::exp(cplx(0.0, -2.0 * theta)) / (2.0 * (1.0 - lam0)) * nf.g20 *
         nf.g11)
            .real() -
        0.5 * std::norm(nf.g11) - 0.25 * std::norm(nf.g02);
    return nf;
}

}  // namespace detail

// Normal-form coefficients and first Lyapunov coefficient of the map at the
// fixed point sigma with alpha = beta(eps).  The frame satisfying the
// rotation-scaling hypothesis is applied first, after which q = p = (1,-i)/sqrt(2).
inline NSReport lyapunov_first(const PiecewiseSystem& sys, const ParameterPoint& p_at_beta,
                               const Vec& sigma, const Mat& jacobian, int r,
                               const NsOptions& opt = {}) {
    if (sys.dim != 2) throw AnalysisError("lyapunov_first: analysis requires a planar map");
    NSReport rep;
    rep.r = r;
    rep.eps = p_at_beta.epsilon;
    rep.beta_eps = p_at_beta.alpha;
    rep.sigma = sigma;

    rep.normal_frame = normalize_frame(jacobian, p_at_beta.epsilon, r);
    const Mat L = rep.normal_frame;
    const Mat Li = inverse(L);
    const Mat C = Li * jacobian * L;
    rep.lambda = cplx(C(0, 0), C(1, 0));
    rep.theta_eps = std::atan2(C(1, 0), C(0, 0));
    for (int k = 1; k <= 4; ++k)
        rep.resonance_flags[k - 1] =
            std::abs(std::exp(cplx(0.0, k * rep.theta_eps)) - 1.0) < opt.resonance_tol;

    // tensors of the framed deviation y -> L^-1 (P(sigma + L y) - sigma - L y)
    auto framed_dev = [&](const Vec& y) {
        const Vec x = sigma + L * y;
        return Li * (time_t_map(sys, x, p_at_beta, opt.flow) - x);
    };
    MapSample ms;
    DerivativeScheme sch;
    sch.flow = opt.flow;
    sch.noise_floor = 4.0 * (Li.norm_inf() + 1.0) * opt.flow.abs_tol;
    sch.deviation_scale = std::pow(p_at_beta.epsilon, r);
    deviation_tensors(framed_dev, 2, Vec(2), sch, ms);

    const double s2 = 1.0 / std::sqrt(2.0);
    const std::array<cplx, 2> q{cplx(s2, 0.0), cplx(0.0, -s2)};
    const auto nf = detail::lyapunov_from_tensors(ms.bilinear, ms.trilinear, rep.theta_eps, q, q);
    rep.g20 = nf.g20;
    rep.g11 = nf.g11;
    rep.g02 = nf.g02;
    rep.g21 = nf.g21;
    rep.c1 = nf.c1;
    rep.ell1 = nf.ell1_c1;
    rep.ell1_expanded = nf.ell1_expanded;
    rep.ell1_noise = 4.0 * ms.fd_error;

    bool resonant = false;
    for (bool f : rep.resonance_flags) resonant |= f;
    if (resonant || std::abs(rep.ell1) <= rep.ell1_noise)
        rep.verdict = Verdict::inconclusive;
    else
        rep.verdict = rep.ell1 < 0.0 ? Verdict::supercritical_attracting_curve
                                     : Verdict::subcritical_repelling_curve;
    return rep;
}

struct LyapunovSeries {
    double ell11 = 0.0, ell12 = 0.0, fit_residual = 0.0;
    std::vector<double> eps_grid, ell1_values, beta_values;
};

// Least-squares fit ell1(eps) = eps ell11 + eps^2 ell12 (+ eps^3 slack) over
// clean per-eps runs at alpha = beta(eps).
inline LyapunovSeries lyapunov_series(const PiecewiseSystem& sys, const std::vector<double>& eps_grid,
                                      double alpha0, ParameterPoint p, Vec seed, int r,
                                      const NsOptions& opt = {}) {
    if (eps_grid.size() < 4)
        throw AnalysisError("lyapunov_series: need at least four eps values");
    double emin = eps_grid.front(), emax = eps_grid.front();
    for (double e : eps_grid) {
        emin = std::min(emin, e);
        emax = std::max(emax, e);
    }
    if (emax / emin < 2.0)
        throw AnalysisError("lyapunov_series: eps grid too narrow for a stable fit");

    LyapunovSeries out;
    for (double eps : eps_grid) {
        const double beta = solve_beta(sys, eps, alpha0, p, seed, r, opt);
        ParameterPoint pb = p;
        pb.alpha = beta;
        pb.epsilon = eps;
        const Vec sigma = find_fixed_point(sys, seed, pb, opt, r);
        const Mat J = time_t_map_jacobian(sys, sigma, pb, opt.flow);
        const NSReport rep = lyapunov_first(sys, pb, sigma, J, r, opt);
        out.eps_grid.push_back(eps);
        out.beta_values.push_back(beta);
        out.ell1_values.push_back(rep.ell1);
        seed = sigma;
    }

    // normal equations for the cubic model (columns eps, eps^2, eps^3)
    const int m = static_cast<int>(out.eps_grid.size());
    const int nc = 3;
    double ata[3][3] = {};
    double atb[3] = {};
    for (int i = 0; i < m; ++i) {
        const double e = out.eps_grid[i];
        const double row[3] = {e, e * e, e * e * e};
        for (int a = 0; a < nc; ++a) {
            atb[a] += row[a] * out.ell1_values[i];
            for (int b = 0; b < nc; ++b) ata[a][b] += row[a] * row[b];
        }
    }
    Mat A(3, 3);
    Vec rhs(3);
    for (int a = 0; a < 3; ++a) {
        rhs[a] = atb[a];
        for (int b = 0; b < 3; ++b) A(a, b) = ata[a][b];
    }
    const Vec coef = solve(A, rhs);
    out.ell11 = coef[0];
    out.ell12 = coef[1];
    double ss = 0.0;
    for (int i = 0; i < m; ++i) {
        const double e = out.eps_grid[i];
        const double fit = coef[0] * e + coef[1] * e * e + coef[2] * e * e * e;
        ss += (out.ell1_values[i] - fit) * (out.ell1_values[i] - fit);
    }
    out.fit_residual = std::sqrt(ss / m);
    return out;
}

// --- classification ---------------------------------------------------------------

struct SideClassification {
    bool fixed_point_attracting = false;
    bool curve_exists = false;
    bool curve_attracting = false;
    bool inconclusive = false;
};

// Sign table at a parameter value alpha: tau = (alpha - beta(eps)) a'(alpha0)
// against the sign of the leading Lyapunov coefficient.
inline SideClassification classify(const NSReport& rep, double alpha) {
    SideClassification out;
    const double ell = rep.series_fitted ? (std::abs(rep.ell11) > 1e-4 ? rep.ell11 : rep.ell12)
                                         : rep.ell1;
    if (rep.verdict == Verdict::inconclusive || ell == 0.0 || rep.a_prime_alpha0 == 0.0) {
        out.inconclusive = true;
        return out;
    }
    const double tau = (alpha - rep.beta_eps) * rep.a_prime_alpha0;
    if (ell < 0.0) {
        if (tau <= 0.0) {
            out.fixed_point_attracting = true;
        } else {
            out.fixed_point_attracting = false;
            out.curve_exists = true;
            out.curve_attracting = true;
        }
    } else {
        if (tau >= 0.0) {
            out.fixed_point_attracting = false;
        } else {
            out.fixed_point_attracting = true;
            out.curve_exists = true;
            out.curve_attracting = false;
        }
    }
    return out;
}

// --- full pipeline -----------------------------------------------------------------

struct NsAnalysis {
    NSReport report;
    EigenData rates;
    SideClassification at_alpha;
    double alpha_requested = 0.0;
};

// End-to-end analysis at the requested parameter point: leading order, rate
// fits across alpha, critical curve, frame, coefficients, series, verdict.
inline NsAnalysis ns_analyze(const PiecewiseSystem& sys, const ParameterPoint& p_request,
                             Vec guess, const NsOptions& opt = {},
                             const std::vector<double>& series_eps = {}) {
    NsAnalysis out;
    out.alpha_requested = p_request.alpha;

    ParameterPoint p0 = p_request;
    p0.epsilon = 0.0;
    const int r = detect_leading_order(sys, p0, opt.delta_probe_tol);

    // guiding zero continued across an alpha grid bracketing the Hopf point
    std::vector<double> alphas;
    const double mid = 0.5 * (sys.alpha_lo + sys.alpha_hi);
    const double halfw = 0.45 * (sys.alpha_hi - sys.alpha_lo);
    for (int i = -4; i <= 4; ++i) alphas.push_back(mid + halfw * i / 4.0);

    out.rates = eigen_rates(sys, alphas, p0, newton_on_delta(sys, guess, p0, r, opt), r, opt);

    const double eps = p_request.epsilon;
    if (eps == 0.0) throw AnalysisError("ns_analyze: a nonzero eps is required");
    ParameterPoint pb = p_request;
    const Vec seed0 = newton_on_delta(sys, guess, p0, r, opt);
    const double beta = solve_beta(sys, eps, out.rates.alpha0, pb, seed0, r, opt);
    pb.alpha = beta;
    const Vec sigma = find_fixed_point(sys, seed0, pb, opt, r);
    const Mat J = time_t_map_jacobian(sys, sigma, pb, opt.flow);

    out.report = lyapunov_first(sys, pb, sigma, J, r, opt);
    out.report.alpha0 = out.rates.alpha0;
    out.report.a_prime_alpha0 = out.rates.a_prime_alpha0;
    out.report.b0 = out.rates.b0;

    if (!series_eps.empty()) {
        const LyapunovSeries ser =
            lyapunov_series(sys, series_eps, out.rates.alpha0, p_request, seed0, r, opt);
        out.report.ell11 = ser.ell11;
        out.report.ell12 = ser.ell12;
        out.report.fit_residual = ser.fit_residual;
        out.report.series_fitted = true;
    }
    out.at_alpha = classify(out.report, p_request.alpha);
    return out;
}

}  // namespace tscope
