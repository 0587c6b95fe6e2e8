#pragma once

// T-periodic piecewise-smooth vector fields in standard perturbation form
//
//   x'(t) = sum_{i=1..k} eps^i F_i(t, x; alpha) + eps^{k+1} R(t, x; alpha, eps)
//
// where the F_i switch between zone fields F_i^j across ordered switching
// functions theta_j(x; alpha) in the periodic time variable.  Systems are
// immutable after loading and safe to share across threads.

#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tscope/errors.hpp"
#include "tscope/linalg.hpp"

namespace tscope {

struct ParameterPoint {
    double alpha = 0.0;
    double epsilon = 0.0;
    std::map<std::string, double> extras;

    double extra(const std::string& key, double fallback) const {
        auto it = extras.find(key);
        return it == extras.end() ? fallback : it->second;
    }
};

using FieldFn = std::function<Vec(double, const Vec&, const ParameterPoint&)>;
using FieldJacFn = std::function<Mat(double, const Vec&, const ParameterPoint&)>;

struct ZoneField {
    std::vector<FieldFn> terms;              // coefficient of eps^i, i = 1..k
    std::vector<FieldJacFn> term_jacobians;  // optional analytic d/dx, parallel to terms
    FieldFn remainder;                       // coefficient of eps^{k+1}, may be empty
    FieldFn base;                            // eps^0 drift; empty for standard-form systems
    FieldJacFn base_jacobian;
};

struct SwitchingFunction {
    enum class Kind {
        time_section,   // event at t = theta(x; alpha), the standard-form model
        state_surface   // event at s(x) = 0, zones split by sign(s)
    };
    Kind kind = Kind::time_section;
    std::function<double(const Vec&, const ParameterPoint&)> value;
    std::function<Vec(const Vec&, const ParameterPoint&)> gradient;  // empty -> finite differences
    bool constant = false;  // identically zero gradient
};

struct FieldEval {
    Vec value;
    int zone = 0;
    bool on_boundary = false;  // t within boundary tolerance of a switching surface
};

class PiecewiseSystem {
public:
    std::string name = "inline";
    double period = 0.0;
    int dim = 0;
    int order = 1;  // highest perturbation order k carried by the zone fields
    std::vector<ZoneField> zones;
    std::vector<SwitchingFunction> switchers;

    std::vector<double> domain_lo, domain_hi;  // box D, per state dimension
    double alpha_lo = -0.5, alpha_hi = 0.5;    // interval I
    double eps_max = 0.5;                      // eps_0

    int n_switchers() const { return static_cast<int>(switchers.size()); }

    bool time_sectioned() const {
        for (const auto& s : switchers)
            if (s.kind != SwitchingFunction::Kind::time_section) return false;
        return true;
    }

    bool constant_switchers() const {
        for (const auto& s : switchers)
            if (!s.constant) return false;
        return true;
    }

    // Below the integrator event tolerance, so the flag never fires during
    // normal stepping.
    double boundary_tol() const { return 1e-12 * period; }

    void validate() const {
        if (period <= 0.0) throw ConfigError("system: period must be positive");
        if (dim < 1 || dim > kMaxDim) throw ConfigError("system: unsupported state dimension");
        if (order < 1) throw ConfigError("system: perturbation order must be >= 1");
        if (zones.size() != switchers.size() + 1)
            throw ConfigError("system: zone count must equal switcher count + 1");
        for (const auto& z : zones) {
            if (static_cast<int>(z.terms.size()) != order)
                throw ConfigError("system: every zone needs one field term per perturbation order");
            for (const auto& f : z.terms)
                if (!f) throw ConfigError("system: missing zone field evaluator");
        }
        if (static_cast<int>(domain_lo.size()) != dim || static_cast<int>(domain_hi.size()) != dim)
            throw ConfigError("system: domain box must list one interval per dimension");
        if (!switchers.empty() && !time_sectioned() && switchers.size() != 1)
            throw ConfigError("system: state-surface switching supports a single surface");
        if (time_sectioned()) check_switcher_order();
    }

    bool in_domain(const Vec& x) const {
        for (int i = 0; i < dim; ++i)
            if (x[i] < domain_lo[i] || x[i] > domain_hi[i]) return false;
        return true;
    }

    void require_params(const ParameterPoint& p) const {
        if (std::abs(p.epsilon) >= eps_max)
            throw AnalysisError("epsilon outside the declared (-eps0, eps0) interval");
    }

    // Zone index holding time t (reduced mod period) for state x.
    int zone_of_time(double t, const Vec& x, const ParameterPoint& p) const {
        const double tm = wrap_time(t);
        int j = 0;
        for (const auto& s : switchers) {
            if (tm > s.value(x, p)) ++j;
            else break;
        }
        return j;
    }

    int zone_of_state(const Vec& x, const ParameterPoint& p) const {
        return switchers[0].value(x, p) > 0.0 ? 0 : 1;
    }

    double wrap_time(double t) const {
        double tm = std::fmod(t, period);
        if (tm < 0.0) tm += period;
        return tm;
    }

    // F_i^j for zone j and order i (1-based in the perturbation order).
    Vec zone_term(int zone, int i, double t, const Vec& x, const ParameterPoint& p) const {
        return zones[zone].terms[i - 1](t, x, p);
    }

    bool standard_form() const {
        for (const auto& z : zones)
            if (z.base) return false;
        return true;
    }

    // Full zone field eps^0 base + sum_i eps^i F_i^j + eps^{k+1} R^j.
    Vec zone_field(int zone, double t, const Vec& x, const ParameterPoint& p) const {
        Vec out = zones[zone].base ? zones[zone].base(t, x, p) : Vec(dim);
        double w = 1.0;
        for (int i = 1; i <= order; ++i) {
            w *= p.epsilon;
            out += w * zones[zone].terms[i - 1](t, x, p);
        }
        if (zones[zone].remainder) out += (w * p.epsilon) * zones[zone].remainder(t, x, p);
        return out;
    }

    // d/dx of the full zone field; analytic terms when provided, otherwise
    // central differences with the first-derivative optimal step.
    Mat zone_field_jacobian(int zone, double t, const Vec& x, const ParameterPoint& p) const {
        const auto& z = zones[zone];
        const bool analytic = z.term_jacobians.size() == z.terms.size() && !z.remainder &&
                              (!z.base || z.base_jacobian);
        if (analytic) {
            bool all = true;
            for (const auto& J : z.term_jacobians)
                if (!J) { all = false; break; }
            if (all) {
                Mat out = z.base_jacobian ? z.base_jacobian(t, x, p) : Mat(dim, dim);
                double w = 1.0;
                for (int i = 1; i <= order; ++i) {
                    w *= p.epsilon;
                    out += w * z.term_jacobians[i - 1](t, x, p);
                }
                return out;
            }
        }
        return fd_jacobian([&](const Vec& y) { return zone_field(zone, t, y, p); }, x);
    }

    // Jacobian of a single order term F_i^j.
    Mat zone_term_jacobian(int zone, int i, double t, const Vec& x, const ParameterPoint& p) const {
        const auto& z = zones[zone];
        if (static_cast<int>(z.term_jacobians.size()) >= i && z.term_jacobians[i - 1])
            return z.term_jacobians[i - 1](t, x, p);
        return fd_jacobian([&](const Vec& y) { return zone_term(zone, i, t, y, p); }, x);
    }

    Vec switcher_gradient(int j, const Vec& x, const ParameterPoint& p) const {
        const auto& s = switchers[j];
        if (s.constant) return Vec(dim);
        if (s.gradient) return s.gradient(x, p);
        Vec g(dim);
        const double h = std::cbrt(2.2204460492503131e-16) * std::max(1.0, x.norm());
        for (int i = 0; i < dim; ++i) {
            Vec xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            g[i] = (s.value(xp, p) - s.value(xm, p)) / (2.0 * h);
        }
        return g;
    }

    // Evaluates the right-hand side at (t, x).  Exactly one zone applies off
    // the switching set; on it, the flag is raised and the caller decides the
    // side (the zone reported is the left/lower one).
    FieldEval field_at(double t, const Vec& x, const ParameterPoint& p) const {
        FieldEval out;
        if (!time_sectioned()) {
            out.zone = zone_of_state(x, p);
            out.on_boundary = std::abs(switchers[0].value(x, p)) <= boundary_tol();
        } else {
            const double tm = wrap_time(t);
            out.zone = zone_of_time(t, x, p);
            for (int j = 0; j < n_switchers(); ++j) {
                if (std::abs(tm - switchers[j].value(x, p)) <= boundary_tol()) {
                    out.on_boundary = true;
                    out.zone = j;  // left side of theta_j
                    break;
                }
            }
        }
        out.value = zone_field(out.zone, t, x, p);
        return out;
    }

    template <class F>
    static Mat fd_jacobian(F&& f, const Vec& x) {
        const int n = x.size();
        Mat out(n, n);
        const double h = std::cbrt(2.2204460492503131e-16) * std::max(1.0, x.norm());
        for (int j = 0; j < n; ++j) {
            Vec xp = x, xm = x;
            xp[j] += h;
            xm[j] -= h;
            const Vec d = f(xp) - f(xm);
            for (int i = 0; i < n; ++i) out(i, j) = d[i] / (2.0 * h);
        }
        return out;
    }

private:
    void check_switcher_order() const {
        if (switchers.empty()) return;
        ParameterPoint p;
        const int samples = 5;
        for (int s = 0; s <= samples; ++s) {
            p.alpha = alpha_lo + (alpha_hi - alpha_lo) * s / samples;
            for (int m = 0; m <= samples; ++m) {
                Vec x(dim);
                for (int i = 0; i < dim; ++i)
                    x[i] = domain_lo[i] + (domain_hi[i] - domain_lo[i]) * m / samples;
                double prev = 0.0;
                for (const auto& sw : switchers) {
                    const double th = sw.value(x, p);
                    if (th <= prev || th >= period)
                        throw ConfigError("system: switching functions must be strictly ordered in (0, period)");
                    prev = th;
                }
            }
        }
    }
};

// Helper for constant time sections theta_j(x) = c.
inline SwitchingFunction constant_switcher(double c) {
    SwitchingFunction s;
    s.kind = SwitchingFunction::Kind::time_section;
    s.constant = true;
    s.value = [c](const Vec&, const ParameterPoint&) { return c; };
    return s;
}

// ---------------------------------------------------------------------------
// Built-in system registry and config-file loading.

using SystemFactory =
    std::function<PiecewiseSystem(const std::map<std::string, double>&, int /*order*/)>;

inline std::map<std::string, SystemFactory>& builtin_systems() {
    static std::map<std::string, SystemFactory> reg;
    return reg;
}

struct BuiltinRegistrar {
    BuiltinRegistrar(const std::string& name, SystemFactory f) { builtin_systems()[name] = std::move(f); }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline std::vector<double> parse_numbers(const std::string& s, const std::string& key) {
    std::vector<double> out;
    std::istringstream is(s);
    std::string tok;
    while (is >> tok) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ConfigError("config: bad number '" + tok + "' in key '" + key + "'");
        }
    }
    return out;
}

struct RawConfig {
    std::map<std::string, std::string> top;                   // flat key = value
    std::vector<std::string> switcher_lines;                  // ordered "switcher =" values
    std::map<int, std::map<std::string, std::string>> zones;  // [zone j] sections
};

inline RawConfig parse_config_text(const std::string& text) {
    RawConfig cfg;
    std::istringstream is(text);
    std::string line;
    bool header_seen = false;
    int current_zone = -1;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (!header_seen) {
            if (line != "torus-scope-config v1")
                throw ConfigError("config: expected header 'torus-scope-config v1'");
            header_seen = true;
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("config: unterminated section header");
            std::istringstream hs(line.substr(1, line.size() - 2));
            std::string word;
            int idx = -1;
            hs >> word >> idx;
            if (word != "zone" || idx < 0)
                throw ConfigError("config: unknown section '" + line + "'");
            current_zone = idx;
            cfg.zones[idx];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) + " is not 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config: empty key on line " + std::to_string(lineno));
        if (current_zone >= 0) {
            cfg.zones[current_zone][key] = val;
        } else if (key == "switcher") {
            cfg.switcher_lines.push_back(val);
        } else {
            cfg.top[key] = val;
        }
    }
    if (!header_seen) throw ConfigError("config: empty input, expected 'torus-scope-config v1'");
    return cfg;
}

// Affine field term  F(t, x) = M x + c  from a zone section.
inline FieldFn affine_term(const Mat& m, const Vec& c) {
    return [m, c](double, const Vec& x, const ParameterPoint&) { return m * x + c; };
}
inline FieldJacFn affine_jacobian(const Mat& m) {
    return [m](double, const Vec&, const ParameterPoint&) { return m; };
}

}  // namespace detail

// Loads a system from config text.  Built-in names resolve through the
// registry with `param.*` overrides; `system = inline` assembles affine zone
// fields and affine switching functions from the zone sections.
inline PiecewiseSystem load_system(const std::string& config_text) {
    using namespace detail;
    RawConfig cfg = parse_config_text(config_text);

    auto top = [&](const std::string& key) -> const std::string* {
        auto it = cfg.top.find(key);
        return it == cfg.top.end() ? nullptr : &it->second;
    };

    const std::string* sysname = top("system");
    if (!sysname) throw ConfigError("config: missing 'system' key");

    std::map<std::string, double> params;
    for (const auto& [k, v] : cfg.top)
        if (k.rfind("param.", 0) == 0) params[k.substr(6)] = parse_numbers(v, k).at(0);

    int order = 0;
    if (const auto* v = top("order")) order = static_cast<int>(parse_numbers(*v, "order").at(0));

    PiecewiseSystem sys;
    if (*sysname != "inline") {
        auto it = builtin_systems().find(*sysname);
        if (it == builtin_systems().end())
            throw ConfigError("config: unknown system name '" + *sysname + "'");
        sys = it->second(params, order);
    } else {
        if (!top("dim") || !top("period")) throw ConfigError("config: inline system needs 'dim' and 'period'");
        sys.dim = static_cast<int>(parse_numbers(*top("dim"), "dim").at(0));
        sys.period = parse_numbers(*top("period"), "period").at(0);
        sys.order = order > 0 ? order : 1;
        if (sys.dim < 1 || sys.dim > kMaxDim) throw ConfigError("config: unsupported dim");

        for (const auto& line : cfg.switcher_lines) {
            const auto bar = line.find('|');
            const double c = parse_numbers(trim(line.substr(0, bar == std::string::npos ? line.size() : bar)),
                                           "switcher").at(0);
            SwitchingFunction sw;
            sw.kind = SwitchingFunction::Kind::time_section;
            if (bar == std::string::npos) {
                sw = constant_switcher(c);
            } else {
                const auto g = parse_numbers(trim(line.substr(bar + 1)), "switcher gradient");
                if (static_cast<int>(g.size()) != sys.dim)
                    throw ConfigError("config: switcher gradient needs one entry per dimension");
                Vec gv(sys.dim);
                bool zero = true;
                for (int i = 0; i < sys.dim; ++i) {
                    gv[i] = g[i];
                    if (g[i] != 0.0) zero = false;
                }
                sw.constant = zero;
                sw.value = [c, gv](const Vec& x, const ParameterPoint&) { return c + dot(gv, x); };
                sw.gradient = [gv](const Vec&, const ParameterPoint&) { return gv; };
            }
            sys.switchers.push_back(std::move(sw));
        }

        const int nzones = cfg.zones.empty() ? 0 : cfg.zones.rbegin()->first + 1;
        for (int j = 0; j < nzones; ++j) {
            auto zit = cfg.zones.find(j);
            if (zit == cfg.zones.end()) throw ConfigError("config: missing [zone " + std::to_string(j) + "]");
            ZoneField zf;
            for (int i = 1; i <= sys.order; ++i) {
                const std::string mk = "f" + std::to_string(i) + ".matrix";
                const std::string ck = "f" + std::to_string(i) + ".constant";
                Mat m(sys.dim, sys.dim);
                Vec c(sys.dim);
                auto mit = zit->second.find(mk);
                auto cit = zit->second.find(ck);
                if (mit == zit->second.end() && cit == zit->second.end())
                    throw ConfigError("config: zone " + std::to_string(j) + " missing term f" + std::to_string(i));
                if (mit != zit->second.end()) {
                    const auto vals = parse_numbers(mit->second, mk);
                    if (static_cast<int>(vals.size()) != sys.dim * sys.dim)
                        throw ConfigError("config: '" + mk + "' needs dim*dim entries");
                    for (int r = 0; r < sys.dim; ++r)
                        for (int cidx = 0; cidx < sys.dim; ++cidx) m(r, cidx) = vals[r * sys.dim + cidx];
                }
                if (cit != zit->second.end()) {
                    const auto vals = parse_numbers(cit->second, ck);
                    if (static_cast<int>(vals.size()) != sys.dim)
                        throw ConfigError("config: '" + ck + "' needs dim entries");
                    for (int r = 0; r < sys.dim; ++r) c[r] = vals[r];
                }
                zf.terms.push_back(detail::affine_term(m, c));
                zf.term_jacobians.push_back(detail::affine_jacobian(m));
            }
            sys.zones.push_back(std::move(zf));
        }
    }

    if (const auto* v = top("domain")) {
        const auto vals = parse_numbers(*v, "domain");
        if (static_cast<int>(vals.size()) != 2 * sys.dim)
            throw ConfigError("config: 'domain' needs lo hi per dimension");
        sys.domain_lo.clear();
        sys.domain_hi.clear();
        for (int i = 0; i < sys.dim; ++i) {
            sys.domain_lo.push_back(vals[2 * i]);
            sys.domain_hi.push_back(vals[2 * i + 1]);
        }
    }
    if (sys.domain_lo.empty()) {
        sys.domain_lo.assign(sys.dim, -20.0);
        sys.domain_hi.assign(sys.dim, 20.0);
    }
    if (const auto* v = top("alpha_range")) {
        const auto vals = parse_numbers(*v, "alpha_range");
        if (vals.size() != 2) throw ConfigError("config: 'alpha_range' needs two numbers");
        sys.alpha_lo = vals[0];
        sys.alpha_hi = vals[1];
    }
    if (const auto* v = top("epsilon_max")) sys.eps_max = parse_numbers(*v, "epsilon_max").at(0);
    if (const auto* v = top("period"); v && *sysname != "inline")
        sys.period = parse_numbers(*v, "period").at(0);

    sys.validate();
    return sys;
}

}  // namespace tscope
