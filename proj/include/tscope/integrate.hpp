#pragma once

// Zone-concatenated integration of piecewise systems.
//
// The stepper is the Dormand-Prince 5(4) embedded pair with the classic
// fourth-order dense interpolant (Hairer & Wanner's DOPRI5 coefficients).
// Constant switching times are landed on exactly by capping the step; state
// dependent switching functions are bracketed along accepted steps and
// refined on the dense interpolant, after which the cut step is re-integrated
// so the restart state carries full accuracy.  Variational equations are
// integrated per zone with the saltation correction applied at each crossing.

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "tscope/errors.hpp"
#include "tscope/model.hpp"

namespace tscope {

struct FlowOptions {
    double abs_tol = 1e-10;
    double rel_tol = 1e-10;
    double event_tol = 1e-12;   // residual bound for located switching times
    long max_steps = 2000000;
    bool record_samples = false;
    double sample_dt = 0.0;     // sampling grid for recorded output; 0 = accepted steps
    bool check_domain = true;
};

struct SwitchEvent {
    double time = 0.0;
    double residual = 0.0;
    int from_zone = 0;
    int to_zone = 0;
    Vec state;
};

struct FlowTrace {
    double t_begin = 0.0;
    double t_end = 0.0;
    std::vector<double> sample_t;
    std::vector<Vec> sample_x;
    std::vector<SwitchEvent> switch_times;
    Vec end_state;
};

namespace detail {

using RhsFn = std::function<void(double, const double*, double*)>;

// Dormand-Prince 5(4) with FSAL and dense output.  Buffers are reused across
// steps; the state dimension is fixed at construction.
class Dopri5 {
public:
    Dopri5(int n, RhsFn rhs, double atol, double rtol)
        : n_(n), rhs_(std::move(rhs)), atol_(atol), rtol_(rtol) {
        for (auto* v : {&k1_, &k2_, &k3_, &k4_, &k5_, &k6_, &k7_, &ytmp_, &yerr_})
            v->assign(n_, 0.0);
        for (auto* v : {&rc1_, &rc2_, &rc3_, &rc4_, &rc5_}) v->assign(n_, 0.0);
    }

    void prime(double t, const std::vector<double>& y) {
        rhs_(t, y.data(), k1_.data());
        fresh_k1_ = true;
    }

    double initial_step(const std::vector<double>& y, double span_cap) const {
        double d0 = 0.0, d1 = 0.0;
        for (int i = 0; i < n_; ++i) {
            const double sc = atol_ + rtol_ * std::abs(y[i]);
            d0 = std::max(d0, std::abs(y[i]) / sc);
            d1 = std::max(d1, std::abs(k1_[i]) / sc);
        }
        const double h = (d1 > 1e-10) ? 0.01 * std::max(d0, 1.0) / d1 : 0.1 * span_cap;
        return std::max(std::min(h, span_cap), 1e-12 * span_cap);
    }

    // One accepted step from (t, y); h carries the signed attempt on entry and
    // the signed proposal for the next step on exit.  h_limit caps |h| so the
    // step never passes a known stop time.
    void step(double& t, std::vector<double>& y, double& h, double h_limit, long& budget) {
        if (!fresh_k1_) prime(t, y);
        bool rejected = false;
        for (;;) {
            if (--budget < 0) throw AnalysisError("flow: step budget exhausted");
            double h_try = std::copysign(std::min(std::abs(h), h_limit), h);
            if (std::abs(h_try) < h_limit && std::abs(h_try) < 1e-14 * std::max(1.0, std::abs(t)))
                throw AnalysisError("flow: step-size underflow");
            stages(t, y, h_try);
            double err = 0.0;
            for (int i = 0; i < n_; ++i) {
                const double sc = atol_ + rtol_ * std::max(std::abs(y[i]), std::abs(ytmp_[i]));
                const double e = yerr_[i] / sc;
                err += e * e;
            }
            err = std::sqrt(err / n_);
            if (err <= 1.0) {
                build_dense(y, h_try);
                t_old_ = t;
                h_old_ = h_try;
                t += h_try;
                y.swap(ytmp_);
                k1_.swap(k7_);  // FSAL
                fresh_k1_ = true;
                double fac = 0.9 * std::pow(std::max(err, 1e-10), -0.2);
                fac = std::min(rejected ? 1.0 : 6.0, std::max(0.2, fac));
                h = h_try * fac;
                return;
            }
            rejected = true;
            h = h_try * std::min(0.9, std::max(0.2, 0.9 * std::pow(err, -0.2)));
        }
    }

    // Dense evaluation on the last accepted step, sigma in [0, 1].
    void dense(double sigma, double* out) const {
        const double s1 = 1.0 - sigma;
        for (int i = 0; i < n_; ++i)
            out[i] = rc1_[i] +
                     sigma * (rc2_[i] + s1 * (rc3_[i] + sigma * (rc4_[i] + s1 * rc5_[i])));
    }
    double dense_t(double sigma) const { return t_old_ + sigma * h_old_; }
    double last_t_old() const { return t_old_; }
    double last_h() const { return h_old_; }

private:
    void stages(double t, const std::vector<double>& y, double h) {
        auto ax = [&](std::initializer_list<std::pair<double, const std::vector<double>*>> terms,
                      std::vector<double>& out) {
            for (int i = 0; i < n_; ++i) {
                double s = y[i];
                for (const auto& [c, k] : terms) s += h * c * (*k)[i];
                out[i] = s;
            }
        };
        ax({{1.0 / 5, &k1_}}, ytmp_);
        rhs_(t + h / 5, ytmp_.data(), k2_.data());
        ax({{3.0 / 40, &k1_}, {9.0 / 40, &k2_}}, ytmp_);
        rhs_(t + 3 * h / 10, ytmp_.data(), k3_.data());
        ax({{44.0 / 45, &k1_}, {-56.0 / 15, &k2_}, {32.0 / 9, &k3_}}, ytmp_);
        rhs_(t + 4 * h / 5, ytmp_.data(), k4_.data());
        ax({{19372.0 / 6561, &k1_}, {-25360.0 / 2187, &k2_}, {64448.0 / 6561, &k3_},
            {-212.0 / 729, &k4_}},
           ytmp_);
        rhs_(t + 8 * h / 9, ytmp_.data(), k5_.data());
        ax({{9017.0 / 3168, &k1_}, {-355.0 / 33, &k2_}, {46732.0 / 5247, &k3_}, {49.0 / 176, &k4_},
            {-5103.0 / 18656, &k5_}},
           ytmp_);
        rhs_(t + h, ytmp_.data(), k6_.data());
        ax({{35.0 / 384, &k1_}, {500.0 / 1113, &k3_}, {125.0 / 192, &k4_}, {-2187.0 / 6784, &k5_},
            {11.0 / 84, &k6_}},
           ytmp_);
        rhs_(t + h, ytmp_.data(), k7_.data());
        static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                                e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
        for (int i = 0; i < n_; ++i)
            yerr_[i] = h * (e1 * k1_[i] + e3 * k3_[i] + e4 * k4_[i] + e5 * k5_[i] + e6 * k6_[i] +
                            e7 * k7_[i]);
    }

    void build_dense(const std::vector<double>& y0, double h) {
        static constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                                d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                                d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;
        for (int i = 0; i < n_; ++i) {
            const double dy = ytmp_[i] - y0[i];
            rc1_[i] = y0[i];
            rc2_[i] = dy;
            rc3_[i] = h * k1_[i] - dy;
            rc4_[i] = dy - h * k7_[i] - rc3_[i];
            rc5_[i] = h * (d1 * k1_[i] + d3 * k3_[i] + d4 * k4_[i] + d5 * k5_[i] + d6 * k6_[i] +
                           d7 * k7_[i]);
        }
    }

    int n_;
    RhsFn rhs_;
    double atol_, rtol_;
    std::vector<double> k1_, k2_, k3_, k4_, k5_, k6_, k7_, ytmp_, yerr_;
    std::vector<double> rc1_, rc2_, rc3_, rc4_, rc5_;
    double t_old_ = 0.0, h_old_ = 0.0;
    bool fresh_k1_ = false;
};

inline Vec to_vec(const double* y, int dim) {
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v[i] = y[i];
    return v;
}

inline Mat to_mat(const double* y, int dim) {
    Mat m(dim, dim);
    for (int j = 0; j < dim; ++j)
        for (int i = 0; i < dim; ++i) m(i, j) = y[j * dim + i];
    return m;
}

// Signed-time flow over at most one period span, with zone bookkeeping.  When
// with_variationals is set the state is augmented column-major with the
// fundamental matrix.
struct FlowDriver {
    const PiecewiseSystem& sys;
    ParameterPoint p;
    FlowOptions opt;
    bool with_variationals = false;

    FlowTrace trace;
    Mat jacobian;

    void run(const Vec& x0, double t0, double t1) {
        const int dim = sys.dim;
        const int n = with_variationals ? dim + dim * dim : dim;
        const int dir = t1 >= t0 ? 1 : -1;
        const bool time_zones = sys.time_sectioned();

        std::vector<double> y(n, 0.0);
        for (int i = 0; i < dim; ++i) y[i] = x0[i];
        if (with_variationals)
            for (int i = 0; i < dim; ++i) y[dim + i * dim + i] = 1.0;

        int zone = time_zones ? starting_zone(t0, x0, dir) : sys.zone_of_state(x0, p);

        trace.t_begin = t0;
        trace.t_end = t1;

        double t = t0;
        long budget = opt.max_steps;
        double next_sample = t0 + dir * opt.sample_dt;

        auto fresh_stepper = [&](int z) {
            Dopri5 s(n, make_rhs(z), opt.abs_tol, opt.rel_tol);
            s.prime(t, y);
            return s;
        };
        Dopri5 stepper = fresh_stepper(zone);
        double h = dir * stepper.initial_step(y, std::abs(t1 - t0));
        record_sample(t, y.data());

        const double t_done_tol = 1e-14 * std::max(1.0, std::abs(t1 - t0));
        while (dir * (t1 - t) > t_done_tol) {
            // Stop targets inside the current zone: the final time and, for
            // constant time sections, the exact boundary.
            double t_stop = t1;
            int stop_switcher = -1;
            if (time_zones) {
                const int sw = dir > 0 ? zone : zone - 1;  // boundary ahead in travel direction
                if (sw >= 0 && sw < sys.n_switchers() && sys.switchers[sw].constant) {
                    const double th = sys.switchers[sw].value(to_vec(y.data(), dim), p);
                    if (dir * (t_stop - th) > 0) {
                        t_stop = th;
                        stop_switcher = sw;
                    }
                }
            }

            const double h_limit = std::min(std::abs(t_stop - t), sys.period / 8.0);
            const double t_prev = t;
            std::vector<double> y_prev = y;
            stepper.step(t, y, h, h_limit, budget);

            if (const auto ev = watch_event(zone, dir, t_prev, y_prev, t, y); ev.hit) {
                double tau = refine_event(stepper, ev);
                emit_grid_samples(stepper, tau, next_sample, dir);
                y = std::move(y_prev);
                t = t_prev;
                if (std::abs(tau - t_prev) > 1e-15 * std::max(1.0, std::abs(tau)))
                    integrate_plain(zone, t, y, tau, budget);
                t = tau;
                polish_event(zone, ev.switcher, t, y, budget);
                cross(zone, dir, ev.switcher, t, y);
                stepper = fresh_stepper(zone);
                record_step_sample(t, y.data());
                continue;
            }

            emit_grid_samples(stepper, t, next_sample, dir);
            record_step_sample(t, y.data());
            check_domain(t, y.data());

            if (stop_switcher >= 0 && std::abs(t - t_stop) <= 1e-12 * std::max(1.0, std::abs(t_stop))) {
                SwitchEvent se;
                se.time = t;
                se.residual = std::abs(t - t_stop);  // landed on the constant section
                se.from_zone = zone;
                se.state = to_vec(y.data(), dim);
                zone += dir;
                se.to_zone = zone;
                apply_saltation(stop_switcher, se.from_zone, se.to_zone, t, y);
                trace.switch_times.push_back(std::move(se));
                stepper = fresh_stepper(zone);
            }
        }

        trace.end_state = to_vec(y.data(), sys.dim);
        if (opt.record_samples && opt.sample_dt <= 0.0 &&
            (trace.sample_t.empty() || trace.sample_t.back() != t))
            record_sample(t, y.data());
        if (with_variationals) jacobian = to_mat(y.data() + sys.dim, sys.dim);
    }

private:
    int starting_zone(double t0, const Vec& x0, int dir) const {
        double tm = sys.wrap_time(t0);
        if (dir < 0 && std::abs(tm) <= sys.boundary_tol()) tm = sys.period;
        // On a boundary, start in the zone ahead in the travel direction.
        for (int j = 0; j < sys.n_switchers(); ++j)
            if (std::abs(tm - sys.switchers[j].value(x0, p)) <= sys.boundary_tol())
                return dir > 0 ? j + 1 : j;
        if (std::abs(tm - sys.period) <= sys.boundary_tol()) return sys.n_switchers();
        int zone = 0;
        for (const auto& s : sys.switchers) {
            if (tm > s.value(x0, p)) ++zone;
            else break;
        }
        return zone;
    }

    RhsFn make_rhs(int zone) {
        const int dim = sys.dim;
        if (!with_variationals)
            return [this, zone, dim](double t, const double* y, double* f) {
                const Vec fx = sys.zone_field(zone, t, to_vec(y, dim), p);
                for (int i = 0; i < dim; ++i) f[i] = fx[i];
            };
        return [this, zone, dim](double t, const double* y, double* f) {
            const Vec x = to_vec(y, dim);
            const Vec fx = sys.zone_field(zone, t, x, p);
            const Mat J = sys.zone_field_jacobian(zone, t, x, p);
            for (int i = 0; i < dim; ++i) f[i] = fx[i];
            for (int j = 0; j < dim; ++j)
                for (int i = 0; i < dim; ++i) {
                    double s = 0.0;
                    for (int k = 0; k < dim; ++k) s += J(i, k) * y[dim + j * dim + k];
                    f[dim + j * dim + i] = s;
                }
        };
    }

    struct EventHit {
        bool hit = false;
        int switcher = -1;
        double g0 = 0.0, g1 = 0.0;
    };

    // For time sections h_j(t, x) = theta_j(x) - t (t unwrapped: the driver
    // never leaves one period span); for state surfaces s(x).
    double event_value(int switcher, double t, const Vec& x) const {
        const auto& sw = sys.switchers[switcher];
        if (sw.kind == SwitchingFunction::Kind::state_surface) return sw.value(x, p);
        return sw.value(x, p) - t;
    }

    EventHit watch_event(int zone, int dir, double t0, const std::vector<double>& y0, double t1,
                         const std::vector<double>& y1) const {
        EventHit ev;
        if (sys.switchers.empty()) return ev;
        int sw;
        double expected;  // interior sign of the event function in the current zone
        if (sys.time_sectioned()) {
            sw = dir > 0 ? zone : zone - 1;
            if (sw < 0 || sw >= sys.n_switchers() || sys.switchers[sw].constant) return ev;
            expected = static_cast<double>(dir);
        } else {
            sw = 0;
            expected = zone == 0 ? 1.0 : -1.0;
        }
        const double g0 = event_value(sw, t0, to_vec(y0.data(), sys.dim));
        const double g1 = event_value(sw, t1, to_vec(y1.data(), sys.dim));
        if (g0 * expected >= 0.0 && g1 * expected < 0.0) {
            ev.hit = true;
            ev.switcher = sw;
            ev.g0 = g0;
            ev.g1 = g1;
        }
        return ev;
    }

    double refine_event(const Dopri5& stepper, const EventHit& ev) const {
        // Bisection with a secant nudge on the dense interpolant.
        std::vector<double> buf(kMaxDim + kMaxDim * kMaxDim);
        auto g = [&](double sigma) {
            stepper.dense(sigma, buf.data());
            return event_value(ev.switcher, stepper.dense_t(sigma), to_vec(buf.data(), sys.dim));
        };
        double a = 0.0, b = 1.0, ga = ev.g0, gb = ev.g1;
        double m = 0.5;
        for (int it = 0; it < 200; ++it) {
            const double sec = (gb != ga) ? a - ga * (b - a) / (gb - ga) : 0.5 * (a + b);
            m = (sec > a + 1e-3 * (b - a) && sec < b - 1e-3 * (b - a)) ? sec : 0.5 * (a + b);
            const double gm = g(m);
            if (std::abs(gm) <= opt.event_tol || (b - a) < 1e-16) break;
            if ((gm < 0) == (gb < 0)) {
                b = m;
                gb = gm;
            } else {
                a = m;
                ga = gm;
            }
        }
        return stepper.dense_t(m);
    }

    void cross(int& zone, int dir, int switcher, double tau, std::vector<double>& y) {
        SwitchEvent se;
        se.time = tau;
        se.from_zone = zone;
        se.state = to_vec(y.data(), sys.dim);
        se.residual = std::abs(event_value(switcher, tau, se.state));
        zone = sys.time_sectioned() ? zone + dir : 1 - zone;
        se.to_zone = zone;
        apply_saltation(switcher, se.from_zone, se.to_zone, tau, y);
        trace.switch_times.push_back(std::move(se));
    }

    // Variational jump across a located crossing.  With grad the gradient of
    // the switching function at the crossing state and f-, f+ the fields on
    // the departed and entered zones, columns of V update as
    //   V += (f- - f+) dtau,
    //   dtau = (grad . V) / (1 - grad . f-)   for time sections t = theta(x),
    //   dtau = -(grad . V) / (grad . f-)      for state surfaces s(x) = 0.
    // Constant time sections have grad = 0 and leave V continuous.
    void apply_saltation(int switcher, int from_zone, int to_zone, double tau,
                         std::vector<double>& y) {
        if (!with_variationals) return;
        const auto& sw = sys.switchers[switcher];
        if (sw.kind == SwitchingFunction::Kind::time_section && sw.constant) return;
        const int dim = sys.dim;
        const Vec x = to_vec(y.data(), dim);
        const Vec grad = sys.switcher_gradient(switcher, x, p);
        const Vec f_from = sys.zone_field(from_zone, tau, x, p);
        const Vec f_to = sys.zone_field(to_zone, tau, x, p);
        const Vec df = f_from - f_to;
        const double denom = sw.kind == SwitchingFunction::Kind::time_section
                                 ? 1.0 - dot(grad, f_from)
                                 : -dot(grad, f_from);
        if (std::abs(denom) < 1e-12)
            throw AnalysisError("flow: tangential crossing, saltation undefined");
        for (int j = 0; j < dim; ++j) {
            double gv = 0.0;
            for (int k = 0; k < dim; ++k) gv += grad[k] * y[dim + j * dim + k];
            const double dtau = gv / denom;
            for (int i = 0; i < dim; ++i) y[dim + j * dim + i] += df[i] * dtau;
        }
    }

    // The crossing time from the dense interpolant carries the interpolation
    // error of the cut step; after re-integration, Newton steps in time on the
    // actual state push the event residual down to the stated tolerance.
    void polish_event(int zone, int switcher, double& t, std::vector<double>& y, long& budget) {
        const int dim = sys.dim;
        for (int it = 0; it < 4; ++it) {
            const Vec x = to_vec(y.data(), dim);
            const double g = event_value(switcher, t, x);
            if (std::abs(g) <= opt.event_tol) return;
            const auto& sw = sys.switchers[switcher];
            const Vec f = sys.zone_field(zone, t, x, p);
            const Vec grad = sys.switcher_gradient(switcher, x, p);
            const double dg = sw.kind == SwitchingFunction::Kind::state_surface
                                  ? dot(grad, f)
                                  : dot(grad, f) - 1.0;
            if (dg == 0.0) return;
            const double dt = -g / dg;
            integrate_plain(zone, t, y, t + dt, budget);
        }
    }

    // Adaptive integration within a fixed zone, no event watching: used to
    // re-run a cut step up to a located crossing time.
    void integrate_plain(int zone, double& t, std::vector<double>& y, double t_target,
                         long& budget) {
        Dopri5 sub(static_cast<int>(y.size()), make_rhs(zone), opt.abs_tol, opt.rel_tol);
        sub.prime(t, y);
        const int dir = t_target >= t ? 1 : -1;
        double h = dir * sub.initial_step(y, std::abs(t_target - t));
        const double tol = 1e-15 * std::max(1.0, std::abs(t_target));
        while (dir * (t_target - t) > tol) sub.step(t, y, h, std::abs(t_target - t), budget);
    }

    void check_domain(double t, const double* y) const {
        if (!opt.check_domain) return;
        if (!sys.in_domain(to_vec(y, sys.dim)))
            throw AnalysisError("flow: trajectory left the domain box at t = " + std::to_string(t));
    }

    void record_sample(double t, const double* y) {
        if (!opt.record_samples) return;
        trace.sample_t.push_back(t);
        trace.sample_x.push_back(to_vec(y, sys.dim));
    }

    void record_step_sample(double t, const double* y) {
        if (opt.record_samples && opt.sample_dt <= 0.0) record_sample(t, y);
    }

    // Uniform-grid samples on the last accepted step, up to t_hi (the step end
    // or a located crossing; the dense interpolant is valid on either range).
    void emit_grid_samples(const Dopri5& stepper, double t_hi, double& next, int dir) {
        if (!opt.record_samples || opt.sample_dt <= 0.0) return;
        std::vector<double> buf(kMaxDim + kMaxDim * kMaxDim);
        while (dir * (t_hi - next) >= 0.0) {
            const double sigma = (next - stepper.last_t_old()) / stepper.last_h();
            if (sigma < -1e-9 || sigma > 1.0 + 1e-9) break;
            stepper.dense(std::clamp(sigma, 0.0, 1.0), buf.data());
            record_sample(next, buf.data());
            next += dir * opt.sample_dt;
        }
    }
};

}  // namespace detail

// Solves the zone-concatenated Cauchy problems from (t0, x0) to t_end with all
// crossings located; t_end < t0 integrates backward (zone dispatch reversed).
inline FlowTrace flow(const PiecewiseSystem& sys, const Vec& x0, const ParameterPoint& p,
                      double t_end, const FlowOptions& opt = {}, double t0 = 0.0) {
    sys.require_params(p);
    detail::FlowDriver drv{sys, p, opt};
    drv.run(x0, t0, t_end);
    return std::move(drv.trace);
}

// Flow together with the Jacobian of the end state w.r.t. x0.
inline std::pair<FlowTrace, Mat> flow_with_variationals(const PiecewiseSystem& sys, const Vec& x0,
                                                        const ParameterPoint& p, double t_end,
                                                        const FlowOptions& opt = {},
                                                        double t0 = 0.0) {
    sys.require_params(p);
    detail::FlowDriver drv{sys, p, opt};
    drv.with_variationals = true;
    drv.run(x0, t0, t_end);
    return {std::move(drv.trace), drv.jacobian};
}

// Chains full periods for spans beyond [0, T]; sink receives each per-period
// trace with its global time offset.
inline Vec propagate(const PiecewiseSystem& sys, const Vec& x0, const ParameterPoint& p,
                     double total_time, const FlowOptions& opt,
                     const std::function<void(double, const FlowTrace&)>& sink = nullptr) {
    Vec x = x0;
    double done = 0.0;
    while (done < total_time - 1e-12) {
        const double span = std::min(sys.period, total_time - done);
        FlowTrace tr = flow(sys, x, p, span, opt);
        x = tr.end_state;
        if (sink) sink(done, tr);
        done += span;
    }
    return x;
}

}  // namespace tscope
