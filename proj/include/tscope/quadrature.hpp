#pragma once

// Gauss-Legendre panels with adaptive bisection.  Integrands here are smooth
// per panel (panels are split at switching times by the callers), so the
// fixed 32-node rule is spectrally accurate and bisection rarely triggers.

#include <cmath>
#include <functional>
#include <vector>

#include "tscope/errors.hpp"
#include "tscope/linalg.hpp"

namespace tscope {

struct GaussLegendre {
    std::vector<double> nodes, weights;  // on [-1, 1]

    explicit GaussLegendre(int n) {
        nodes.resize(n);
        weights.resize(n);
        for (int k = 0; k < (n + 1) / 2; ++k) {
            double x = std::cos(M_PI * (k + 0.75) / (n + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = x;
                for (int j = 2; j <= n; ++j) {
                    const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (x * p1 - p0) / (x * x - 1.0);
                const double dx = p1 / dp;
                x -= dx;
                if (std::abs(dx) < 1e-16) break;
            }
            const double w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[k] = -x;
            nodes[n - 1 - k] = x;
            weights[k] = w;
            weights[n - 1 - k] = w;
        }
    }

    static const GaussLegendre& fixed32() {
        static const GaussLegendre rule(32);
        return rule;
    }
};

using Integrand = std::function<Vec(double)>;

inline Vec gl_panel(const Integrand& f, double a, double b, int dim) {
    const auto& rule = GaussLegendre::fixed32();
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    Vec acc(dim);
    for (std::size_t i = 0; i < rule.nodes.size(); ++i)
        acc += (rule.weights[i] * half) * f(mid + half * rule.nodes[i]);
    return acc;
}

namespace detail {
inline Vec adaptive_panel(const Integrand& f, double a, double b, int dim, const Vec& whole,
                          double tol, int depth) {
    if (depth > 24) throw AnalysisError("quadrature: panel refinement cap reached");
    const double m = 0.5 * (a + b);
    const Vec left = gl_panel(f, a, m, dim);
    const Vec right = gl_panel(f, m, b, dim);
    const Vec sum = left + right;
    if ((sum - whole).norm_inf() <= tol) return sum;
    return adaptive_panel(f, a, m, dim, left, 0.5 * tol, depth + 1) +
           adaptive_panel(f, m, b, dim, right, 0.5 * tol, depth + 1);
}
}  // namespace detail

// Integrates f over [a, b], assumed smooth on the panel.
inline Vec integrate_smooth(const Integrand& f, double a, double b, int dim, double tol = 1e-12) {
    if (a == b) return Vec(dim);
    return detail::adaptive_panel(f, a, b, dim, gl_panel(f, a, b, dim), tol, 0);
}

// Integrates f over [a, b] split at the given interior breakpoints.
inline Vec integrate_panels(const Integrand& f, double a, double b, const std::vector<double>& breaks,
                            int dim, double tol = 1e-12) {
    Vec acc(dim);
    double left = a;
    for (double s : breaks) {
        if (s <= left || s >= b) continue;
        acc += integrate_smooth(f, left, s, dim, tol);
        left = s;
    }
    acc += integrate_smooth(f, left, b, dim, tol);
    return acc;
}

}  // namespace tscope
