#pragma once

// The time-T map P(x) = phi(T, x) and its derivatives up to third order.
//
// Because the map deviates from the identity only at O(eps^r), second and
// third derivatives are differenced on the deviation g(x) = P(x) - x,
// optionally normalized by a caller-supplied deviation scale (eps^r); this
// keeps the stencil arithmetic away from catastrophic cancellation and lets
// the step sizes balance truncation against the actual evaluation noise of
// the integrator rather than machine epsilon.

#include <array>
#include <cmath>
#include <functional>

#include "tscope/integrate.hpp"
#include "tscope/model.hpp"

namespace tscope {

struct Tensor3 {
    int dim = 0;
    std::array<double, kMaxDim * kMaxDim * kMaxDim> a{};

    explicit Tensor3(int d = 0) : dim(d) {}
    double& at(int c, int i, int j) { return a[(c * kMaxDim + i) * kMaxDim + j]; }
    double at(int c, int i, int j) const { return a[(c * kMaxDim + i) * kMaxDim + j]; }

    // Summed over unordered index pairs so the symmetry B(u, v) = B(v, u)
    // holds exactly in floating point, not just up to rounding.
    Vec apply(const Vec& u, const Vec& v) const {
        Vec out(dim);
        for (int c = 0; c < dim; ++c) {
            double s = 0.0;
            for (int i = 0; i < dim; ++i) {
                s += at(c, i, i) * u[i] * v[i];
                for (int j = i + 1; j < dim; ++j) s += at(c, i, j) * (u[i] * v[j] + u[j] * v[i]);
            }
            out[c] = s;
        }
        return out;
    }
};

struct Tensor4 {
    int dim = 0;
    std::array<double, kMaxDim * kMaxDim * kMaxDim * kMaxDim> a{};

    explicit Tensor4(int d = 0) : dim(d) {}
    double& at(int c, int i, int j, int k) {
        return a[((c * kMaxDim + i) * kMaxDim + j) * kMaxDim + k];
    }
    double at(int c, int i, int j, int k) const {
        return a[((c * kMaxDim + i) * kMaxDim + j) * kMaxDim + k];
    }

    Vec apply(const Vec& u, const Vec& v, const Vec& w) const {
        Vec out(dim);
        for (int c = 0; c < dim; ++c) {
            double s = 0.0;
            for (int i = 0; i < dim; ++i)
                for (int j = 0; j < dim; ++j)
                    for (int k = 0; k < dim; ++k) s += at(c, i, j, k) * u[i] * v[j] * w[k];
            out[c] = s;
        }
        return out;
    }
};

struct MapSample {
    Vec point;
    Vec image;
    Mat jacobian;
    Tensor3 bilinear;
    Tensor4 trilinear;
    double fd_error = 0.0;   // rough absolute error estimate for tensor entries
    bool fd_warning = false; // noise floor dominated the differencing
};

struct DerivativeScheme {
    // Absolute noise of one evaluation of the deviation map.  Defaults to
    // machine epsilon (exact closed-form maps); integrator-backed maps pass
    // their tolerance here.
    double noise_floor = 2.220446049250313e-16;
    double deviation_scale = 1.0;  // eps^r carried by the deviation
    bool variational_jacobian = true;
    FlowOptions flow = {.abs_tol = 1e-12, .rel_tol = 1e-12};
};

inline Vec time_t_map(const PiecewiseSystem& sys, const Vec& x, const ParameterPoint& p,
                      const FlowOptions& opt = {}) {
    return flow(sys, x, p, sys.period, opt).end_state;
}

inline Vec inverse_time_t_map(const PiecewiseSystem& sys, const Vec& x, const ParameterPoint& p,
                              const FlowOptions& opt = {}) {
    return flow(sys, x, p, 0.0, opt, sys.period).end_state;
}

inline Mat time_t_map_jacobian(const PiecewiseSystem& sys, const Vec& x, const ParameterPoint& p,
                               const FlowOptions& opt = {}) {
    return flow_with_variationals(sys, x, p, sys.period, opt).second;
}

// Central-difference tensors of a deviation map at x.  Steps follow the
// optimal balance h2 ~ noise^(1/4), h3 ~ noise^(1/6) scaled by max(1, |x|),
// with the noise taken relative to the normalized deviation.
inline void deviation_tensors(const std::function<Vec(const Vec&)>& dev, int dim, const Vec& x,
                              const DerivativeScheme& scheme, MapSample& out) {
    const double s = scheme.deviation_scale;
    const double noise = std::max(scheme.noise_floor / std::max(s, 1e-300), 2.2e-16);
    const double scale = std::max(1.0, x.norm());
    const double h2 = std::pow(noise, 0.25) * scale;
    const double h3 = std::pow(noise, 1.0 / 6.0) * scale;

    auto g = [&](const Vec& y) { return (1.0 / s) * dev(y); };
    auto shifted = [&](double hi, int i, double hj, int j) {
        Vec y = x;
        y[i] += hi;
        if (j >= 0) y[j] += hj;
        return g(y);
    };

    out.bilinear = Tensor3(dim);
    out.trilinear = Tensor4(dim);
    const Vec g0 = g(x);

    // second derivatives
    for (int i = 0; i < dim; ++i) {
        const Vec gp = shifted(h2, i, 0, -1), gm = shifted(-h2, i, 0, -1);
        const Vec dii = (1.0 / (h2 * h2)) * (gp - 2.0 * g0 + gm);
        for (int c = 0; c < dim; ++c) out.bilinear.at(c, i, i) = s * dii[c];
        for (int j = i + 1; j < dim; ++j) {
            const Vec dpp = shifted(h2, i, h2, j), dpm = shifted(h2, i, -h2, j);
            const Vec dmp = shifted(-h2, i, h2, j), dmm = shifted(-h2, i, -h2, j);
            const Vec dij = (1.0 / (4.0 * h2 * h2)) * (dpp - dpm - dmp + dmm);
            for (int c = 0; c < dim; ++c) {
                out.bilinear.at(c, i, j) = s * dij[c];
                out.bilinear.at(c, j, i) = s * dij[c];
            }
        }
    }

    // third derivatives: (i,i,i) and (i,i,j) patterns cover dim <= 3 analyses
    for (int i = 0; i < dim; ++i) {
        const Vec g2p = shifted(2 * h3, i, 0, -1), gp = shifted(h3, i, 0, -1);
        const Vec gm = shifted(-h3, i, 0, -1), g2m = shifted(-2 * h3, i, 0, -1);
        const Vec diii = (1.0 / (2.0 * h3 * h3 * h3)) * (g2p - 2.0 * gp + 2.0 * gm - g2m);
        for (int c = 0; c < dim; ++c) out.trilinear.at(c, i, i, i) = s * diii[c];
        for (int j = 0; j < dim; ++j) {
            if (j == i) continue;
            const Vec app = shifted(h3, i, h3, j), azp = shifted(0, i, h3, j),
                      amp = shifted(-h3, i, h3, j);
            const Vec apm = shifted(h3, i, -h3, j), azm = shifted(0, i, -h3, j),
                      amm = shifted(-h3, i, -h3, j);
            const Vec diij = (1.0 / (2.0 * h3 * h3 * h3)) *
                             (app - 2.0 * azp + amp - apm + 2.0 * azm - amm);
            for (int c = 0; c < dim; ++c) {
                out.trilinear.at(c, i, i, j) = s * diij[c];
                out.trilinear.at(c, i, j, i) = s * diij[c];
                out.trilinear.at(c, j, i, i) = s * diij[c];
            }
        }
    }

    double bmag = 0.0;
    for (int c = 0; c < dim; ++c)
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j) bmag = std::max(bmag, std::abs(out.bilinear.at(c, i, j)));
    out.fd_error = s * (4.0 * noise / (h2 * h2) + h2 * h2 * (bmag / s + 1.0) / 12.0);
    out.fd_warning = 4.0 * noise / (h2 * h2) > 1e-3 * std::max(bmag / s, 1e-30);
}

// Map value, Jacobian and symmetric derivative tensors at x.  The Jacobian
// comes from the variational flow (finite differences of the map otherwise);
// tensors are differenced on the deviation P - id.
inline MapSample derivatives_at(const PiecewiseSystem& sys, const Vec& x, const ParameterPoint& p,
                                const DerivativeScheme& scheme = {}) {
    MapSample out;
    out.point = x;

    const double h_clear = 2.0 * std::pow(std::max(scheme.noise_floor, 2.2e-16), 1.0 / 6.0) *
                           std::max(1.0, x.norm());
    for (int i = 0; i < sys.dim; ++i)
        if (x[i] - h_clear < sys.domain_lo[i] || x[i] + h_clear > sys.domain_hi[i])
            throw AnalysisError("derivatives_at: stencil exits the domain box");

    if (scheme.variational_jacobian) {
        auto [tr, J] = flow_with_variationals(sys, x, p, sys.period, scheme.flow);
        out.image = tr.end_state;
        out.jacobian = J;
    } else {
        out.image = time_t_map(sys, x, p, scheme.flow);
        const double h1 = std::cbrt(std::max(scheme.noise_floor, 2.2e-16)) * std::max(1.0, x.norm());
        Mat J(sys.dim, sys.dim);
        for (int j = 0; j < sys.dim; ++j) {
            Vec xp = x, xm = x;
            xp[j] += h1;
            xm[j] -= h1;
            const Vec d = time_t_map(sys, xp, p, scheme.flow) - time_t_map(sys, xm, p, scheme.flow);
            for (int i = 0; i < sys.dim; ++i) J(i, j) = d[i] / (2.0 * h1);
        }
        out.jacobian = J;
    }

    DerivativeScheme sch = scheme;
    if (sch.noise_floor <= 2.3e-16) sch.noise_floor = scheme.flow.abs_tol;
    deviation_tensors(
        [&](const Vec& y) { return time_t_map(sys, y, p, scheme.flow) - y; }, sys.dim, x, sch, out);
    return out;
}

}  // namespace tscope
