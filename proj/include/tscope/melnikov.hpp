#pragma once

// First- and second-order bifurcation functions of the time-T map, computed
// by quadrature split at the switching times:
//
//   g1(x) = int_0^T F1(s, x) ds
//   g2(x) = int_0^T [ DxF1(s, x) int_0^s F1(t, x) dt + F2(s, x) ] ds
//
// The second-order function of the map is Delta2 = g2 + jump correction,
// where the correction depends on the discontinuity jump of F1 across each
// switching surface and on the gradient of the switching function.

#include <algorithm>
#include <vector>

#include "tscope/model.hpp"
#include "tscope/quadrature.hpp"

namespace tscope {

struct MelnikovPair {
    Vec delta1;
    Vec delta2;
    Vec g2_smooth;
    Vec g2_jump;
};

namespace detail {

inline void require_standard_form(const PiecewiseSystem& sys) {
    if (!sys.time_sectioned())
        throw AnalysisError("melnikov: system must use time-sectioned switching");
    if (!sys.standard_form())
        throw AnalysisError("melnikov: system must be in standard form (no order-zero drift)");
}

// Switching times of the frozen state x, clipped to (0, T).
inline std::vector<double> switch_breaks(const PiecewiseSystem& sys, const Vec& x,
                                         const ParameterPoint& p) {
    std::vector<double> br;
    for (const auto& sw : sys.switchers) br.push_back(sw.value(x, p));
    std::sort(br.begin(), br.end());
    return br;
}

}  // namespace detail

inline Vec averaged_g1(const PiecewiseSystem& sys, const Vec& x, const ParameterPoint& p) {
    detail::require_standard_form(sys);
    const auto breaks = detail::switch_breaks(sys, x, p);
    auto f = [&](double s) { return sys.zone_term(sys.zone_of_time(s, x, p), 1, s, x, p); };
    return integrate_panels(f, 0.0, sys.period, breaks, sys.dim);
}

// Cumulative antiderivative of F1(., x) evaluated by per-panel quadrature.
class InnerAntiderivative {
public:
    InnerAntiderivative(const PiecewiseSystem& sys, const Vec& x, const ParameterPoint& p)
        : sys_(sys), x_(x), p_(p), edges_{0.0} {
        for (double b : detail::switch_breaks(sys, x, p)) edges_.push_back(b);
        edges_.push_back(sys.period);
        prefix_.push_back(Vec(sys.dim));
        for (std::size_t m = 0; m + 1 < edges_.size(); ++m)
            prefix_.push_back(prefix_.back() +
                              integrate_smooth([&](double s) { return f1(s); }, edges_[m], edges_[m + 1], sys.dim));
    }

    Vec operator()(double s) const {
        std::size_t m = 0;
        while (m + 2 < edges_.size() && s > edges_[m + 1]) ++m;
        return prefix_[m] + integrate_smooth([&](double t) { return f1(t); }, edges_[m], s, sys_.dim);
    }

    Vec full() const { return prefix_.back(); }

private:
    Vec f1(double s) const { return sys_.zone_term(sys_.zone_of_time(s, x_, p_), 1, s, x_, p_); }

    const PiecewiseSystem& sys_;
    Vec x_;
    ParameterPoint p_;
    std::vector<double> edges_;
    std::vector<Vec> prefix_;
};

inline Vec averaged_g2(const PiecewiseSystem& sys, const Vec& x, const ParameterPoint& p) {
    detail::require_standard_form(sys);
    const auto breaks = detail::switch_breaks(sys, x, p);
    const InnerAntiderivative inner(sys, x, p);
    auto h = [&](double s) {
        const int zone = sys.zone_of_time(s, x, p);
        Vec out = sys.zone_term_jacobian(zone, 1, s, x, p) * inner(s);
        if (sys.order >= 2) out += sys.zone_term(zone, 2, s, x, p);
        return out;
    };
    return integrate_panels(h, 0.0, sys.period, breaks, sys.dim);
}

inline Vec jump_correction_g2(const PiecewiseSystem& sys, const Vec& x, const ParameterPoint& p) {
    detail::require_standard_form(sys);
    Vec out(sys.dim);
    if (sys.constant_switchers()) return out;  // gradients vanish identically
    const InnerAntiderivative inner(sys, x, p);
    for (int j = 0; j < sys.n_switchers(); ++j) {
        const auto& sw = sys.switchers[j];
        if (sw.constant) continue;
        const double theta = sw.value(x, p);
        const Vec jump = sys.zone_term(j, 1, theta, x, p) - sys.zone_term(j + 1, 1, theta, x, p);
        const double geom = dot(sys.switcher_gradient(j, x, p), inner(theta));
        out += geom * jump;
    }
    return out;
}

inline MelnikovPair melnikov_pair(const PiecewiseSystem& sys, const Vec& x, const ParameterPoint& p) {
    MelnikovPair mp;
    mp.delta1 = averaged_g1(sys, x, p);
    mp.g2_smooth = averaged_g2(sys, x, p);
    mp.g2_jump = jump_correction_g2(sys, x, p);
    mp.delta2 = mp.g2_smooth + mp.g2_jump;
    return mp;
}

}  // namespace tscope
