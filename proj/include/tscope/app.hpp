#pragma once

// Command front end: a RunManifest names one of the analysis commands plus
// config path, output directory, overrides and tolerances; run() executes it
// and writes the artifact files.  Exit codes: 0 success, 1 analysis error,
// 2 config error; failures emit a machine-readable JSON object on stderr.

#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tscope/curve.hpp"
#include "tscope/integrate.hpp"
#include "tscope/io.hpp"
#include "tscope/melnikov.hpp"
#include "tscope/model.hpp"
#include "tscope/nsbif.hpp"
#include "tscope/pwl3d.hpp"
#include "tscope/tmap.hpp"
#include "tscope/version.hpp"

namespace tscope {

struct RunManifest {
    std::string command;  // simulate | section | melnikov | fixed-point | ns-analyze | curve | sweep
    std::string config_path;
    std::string output_dir = ".";
    std::vector<std::pair<std::string, std::string>> overrides;  // --set key=value
    std::map<std::string, double> tolerances;                    // --tol name=value
    double seed_radius = 0.0;
    bool backward = false;  // force inverse-map iteration in `curve`
};

namespace app_detail {

using nlohmann::json;

struct Context {
    PiecewiseSystem sys;
    ParameterPoint p;
    NsOptions ns;
    CurveOptions curve;
    FlowOptions flow;
    std::map<std::string, std::string> set;
    std::map<std::string, std::string> header;
};

inline std::vector<double> parse_list(const std::string& s, const std::string& key) {
    std::vector<double> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, ',')) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw ConfigError("bad number '" + item + "' in --set " + key);
        }
    }
    if (out.empty()) throw ConfigError("empty value in --set " + key);
    return out;
}

inline Context make_context(const RunManifest& m) {
    Context ctx;
    if (m.config_path.empty()) throw ConfigError("missing --config path");
    std::ifstream in(m.config_path);
    if (!in) throw ConfigError("cannot open config file " + m.config_path);
    std::stringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();

    for (const auto& [k, v] : m.overrides) ctx.set[k] = v;
    // parameter shorthands land in the config text so factory defaults follow
    if (ctx.set.count("b")) text += "\nparam.b = " + ctx.set["b"] + "\n";
    if (ctx.set.count("order")) text += "\norder = " + ctx.set["order"] + "\n";
    ctx.sys = load_system(text);

    // runtime parameter point: config keys then --set overrides
    {
        PiecewiseSystem probe = ctx.sys;  // alpha/epsilon defaults live in the config top level
        (void)probe;
    }
    auto top_value = [&text](const std::string& key) -> std::optional<double> {
        std::istringstream is(text);
        std::string line;
        std::optional<double> found;
        while (std::getline(is, line)) {
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            const std::string k = detail::trim(line.substr(0, eq));
            if (k == key) found = std::stod(detail::trim(line.substr(eq + 1)));
        }
        return found;
    };
    if (auto v = top_value("alpha")) ctx.p.alpha = *v;
    if (auto v = top_value("epsilon")) ctx.p.epsilon = *v;
    if (ctx.set.count("alpha")) ctx.p.alpha = parse_list(ctx.set["alpha"], "alpha")[0];
    if (ctx.set.count("epsilon")) ctx.p.epsilon = parse_list(ctx.set["epsilon"], "epsilon")[0];
    for (const auto& [k, v] : ctx.set)
        if (k.rfind("param.", 0) == 0) ctx.p.extras[k.substr(6)] = parse_list(v, k)[0];
    if (ctx.set.count("b")) ctx.p.extras["b"] = parse_list(ctx.set["b"], "b")[0];

    // tolerances
    auto tol = [&](const char* name, double fallback) {
        auto it = m.tolerances.find(name);
        return it == m.tolerances.end() ? fallback : it->second;
    };
    ctx.flow.abs_tol = tol("abs_tol", 1e-10);
    ctx.flow.rel_tol = tol("rel_tol", 1e-10);
    ctx.flow.event_tol = tol("event_tol", 1e-12);
    ctx.ns.newton_tol = tol("newton_tol", 1e-11);
    ctx.ns.beta_tol = tol("beta_tol", 1e-9);
    ctx.ns.resonance_tol = tol("resonance_tol", 1e-6);
    ctx.curve.converge_tol = tol("curve_tol", 1e-9);
    ctx.curve.newton_tol = tol("curve_newton_tol", 1e-11);
    if (ctx.set.count("nodes")) ctx.curve.nodes = static_cast<int>(parse_list(ctx.set["nodes"], "nodes")[0]);
    if (ctx.set.count("fourier_modes"))
        ctx.curve.fourier_modes = static_cast<int>(parse_list(ctx.set["fourier_modes"], "fourier_modes")[0]);
    if (m.seed_radius > 0.0) ctx.curve.seed_radius = m.seed_radius;

    // deterministic header block for every output file
    ctx.header["system"] = ctx.sys.name;
    ctx.header["alpha"] = fmt17(ctx.p.alpha);
    ctx.header["epsilon"] = fmt17(ctx.p.epsilon);
    for (const auto& [k, v] : ctx.p.extras) ctx.header["param." + k] = fmt17(v);
    ctx.header["tol.abs"] = fmt17(ctx.flow.abs_tol);
    ctx.header["tol.rel"] = fmt17(ctx.flow.rel_tol);
    ctx.header["tol.event"] = fmt17(ctx.flow.event_tol);
    ctx.header["tol.newton"] = fmt17(ctx.ns.newton_tol);
    ctx.header["tol.beta"] = fmt17(ctx.ns.beta_tol);
    ctx.header["tol.curve"] = fmt17(ctx.curve.converge_tol);
    return ctx;
}

inline std::string out_path(const RunManifest& m, const std::string& file) {
    std::filesystem::create_directories(m.output_dir);
    return (std::filesystem::path(m.output_dir) / file).string();
}

inline Vec default_guess(const PiecewiseSystem& sys, const Context& ctx) {
    Vec g(sys.dim);
    for (int i = 0; i < sys.dim; ++i) g[i] = 0.5 * (sys.domain_lo[i] + sys.domain_hi[i]);
    auto it = ctx.set.find("guess");
    if (it != ctx.set.end()) {
        const auto v = parse_list(it->second, "guess");
        for (int i = 0; i < sys.dim && i < static_cast<int>(v.size()); ++i) g[i] = v[i];
    }
    return g;
}

inline json tolerances_json(const Context& ctx) {
    return json{{"abs_tol", ctx.flow.abs_tol},
                {"rel_tol", ctx.flow.rel_tol},
                {"event_tol", ctx.flow.event_tol},
                {"newton_tol", ctx.ns.newton_tol},
                {"beta_tol", ctx.ns.beta_tol},
                {"resonance_tol", ctx.ns.resonance_tol},
                {"curve_tol", ctx.curve.converge_tol}};
}

// --- commands ---------------------------------------------------------------

inline void cmd_simulate(const RunManifest& m, Context& ctx) {
    const auto& sys = ctx.sys;
    Vec x0(sys.dim);
    if (auto it = ctx.set.find("x0"); it != ctx.set.end()) {
        const auto v = parse_list(it->second, "x0");
        if (static_cast<int>(v.size()) != sys.dim)
            throw ConfigError("--set x0 needs one value per state dimension");
        for (int i = 0; i < sys.dim; ++i) x0[i] = v[i];
    } else {
        x0 = default_guess(sys, ctx);
    }
    double t_end = sys.period;
    if (auto it = ctx.set.find("t_end"); it != ctx.set.end()) t_end = parse_list(it->second, "t_end")[0];
    FlowOptions fo = ctx.flow;
    fo.record_samples = true;
    fo.sample_dt = sys.period / 256.0;
    if (auto it = ctx.set.find("sample_dt"); it != ctx.set.end())
        fo.sample_dt = parse_list(it->second, "sample_dt")[0];

    std::vector<std::string> cols{"t"};
    for (int i = 1; i <= sys.dim; ++i) cols.push_back("x" + std::to_string(i));
    auto hdr = ctx.header;
    hdr["t_end"] = fmt17(t_end);
    CsvWriter csv(out_path(m, "trajectory.csv"), cols, hdr);
    std::vector<double> switch_lines;
    propagate(sys, x0, ctx.p, t_end, fo, [&](double offset, const FlowTrace& tr) {
        for (std::size_t i = 0; i < tr.sample_t.size(); ++i) {
            if (offset > 0.0 && i == 0) continue;  // de-duplicate period joints
            std::vector<double> row{offset + tr.sample_t[i]};
            for (int d = 0; d < sys.dim; ++d) row.push_back(tr.sample_x[i][d]);
            csv.row(row);
        }
        for (const auto& se : tr.switch_times) switch_lines.push_back(offset + se.time);
    });
    for (double t : switch_lines) csv.comment("switch t = " + fmt17(t));
}

inline void cmd_section(const RunManifest& m, Context& ctx) {
    const auto& sys = ctx.sys;
    Vec x0(sys.dim);
    if (auto it = ctx.set.find("x0"); it != ctx.set.end()) {
        const auto v = parse_list(it->second, "x0");
        if (static_cast<int>(v.size()) != sys.dim)
            throw ConfigError("--set x0 needs one value per state dimension");
        for (int i = 0; i < sys.dim; ++i) x0[i] = v[i];
    } else {
        x0 = default_guess(sys, ctx);
    }
    double t_end = sys.period;
    if (auto it = ctx.set.find("t_end"); it != ctx.set.end()) t_end = parse_list(it->second, "t_end")[0];
    FlowOptions fo = ctx.flow;
    fo.check_domain = false;

    std::vector<std::string> cols{"n"};
    for (int i = 1; i <= sys.dim; ++i) cols.push_back("x" + std::to_string(i));
    auto hdr = ctx.header;
    hdr["t_end"] = fmt17(t_end);
    hdr["section"] = sys.time_sectioned() ? "t = 0 mod period" : "switching surface, upward crossing";
    CsvWriter csv(out_path(m, "section.csv"), cols, hdr);

    long n = 0;
    propagate(sys, x0, ctx.p, t_end, fo, [&](double, const FlowTrace& tr) {
        if (sys.time_sectioned()) {
            std::vector<double> row{static_cast<double>(n++)};
            for (int d = 0; d < sys.dim; ++d) row.push_back(tr.end_state[d]);
            csv.row(row);
        } else {
            for (const auto& se : tr.switch_times) {
                // upward crossings into the first zone, on the positive side
                if (se.to_zone == 0 && se.state[0] > 0.0) {
                    std::vector<double> row{static_cast<double>(n++)};
                    for (int d = 0; d < sys.dim; ++d) row.push_back(se.state[d]);
                    csv.row(row);
                }
            }
        }
    });
}

inline void cmd_melnikov(const RunManifest& m, Context& ctx) {
    const auto& sys = ctx.sys;
    if (sys.dim != 2) throw ConfigError("melnikov grid output expects a planar system");
    auto grid = [&](const char* key, double lo, double hi, int count) {
        std::vector<double> g;
        if (auto it = ctx.set.find(key); it != ctx.set.end()) {
            const auto v = parse_list(it->second, key);
            if (v.size() != 3) throw ConfigError(std::string("--set ") + key + " needs lo,hi,count");
            lo = v[0];
            hi = v[1];
            count = static_cast<int>(v[2]);
        }
        for (int i = 0; i < count; ++i)
            g.push_back(count == 1 ? lo : lo + (hi - lo) * i / (count - 1));
        return g;
    };
    const auto g1 = grid("grid_x1", 1.0, 6.0, 7);
    const auto g2 = grid("grid_x2", -3.0, 4.0, 7);

    CsvWriter csv(out_path(m, "melnikov.csv"),
                  {"x1", "x2", "delta1_1", "delta1_2", "delta2_1", "delta2_2", "g2jump_1", "g2jump_2"},
                  ctx.header);
    for (double a : g1)
        for (double bb : g2) {
            const MelnikovPair mp = melnikov_pair(sys, Vec{a, bb}, ctx.p);
            csv.row({a, bb, mp.delta1[0], mp.delta1[1], mp.delta2[0], mp.delta2[1], mp.g2_jump[0],
                     mp.g2_jump[1]});
        }
}

inline void cmd_fixed_point(const RunManifest& m, Context& ctx) {
    const auto& sys = ctx.sys;
    std::vector<double> alphas;
    {
        double lo = sys.alpha_lo * 0.5, hi = sys.alpha_hi * 0.5;
        int count = 11;
        if (auto it = ctx.set.find("alpha_grid"); it != ctx.set.end()) {
            const auto v = parse_list(it->second, "alpha_grid");
            if (v.size() != 3) throw ConfigError("--set alpha_grid needs lo,hi,count");
            lo = v[0];
            hi = v[1];
            count = static_cast<int>(v[2]);
        }
        for (int i = 0; i < count; ++i)
            alphas.push_back(count == 1 ? lo : lo + (hi - lo) * i / (count - 1));
    }
    NsOptions ns = ctx.ns;
    const int r = detect_leading_order(sys, ParameterPoint{0.0, 0.0, ctx.p.extras});
    ParameterPoint p0 = ctx.p;
    p0.epsilon = 0.0;
    p0.alpha = alphas.front();
    Vec seed = newton_on_delta(sys, default_guess(sys, ctx), p0, r, ns);
    const FixedPointCurve fpc = fixed_point_curve(sys, alphas, ctx.p, seed, ns, r);

    std::vector<std::string> cols{"alpha"};
    for (int i = 1; i <= sys.dim; ++i) cols.push_back("sigma" + std::to_string(i));
    cols.push_back("residual");
    CsvWriter csv(out_path(m, "fixed_point.csv"), cols, ctx.header);
    for (std::size_t i = 0; i < fpc.alpha_grid.size(); ++i) {
        std::vector<double> row{fpc.alpha_grid[i]};
        for (int d = 0; d < sys.dim; ++d) row.push_back(fpc.points[i][d]);
        row.push_back(fpc.newton_residuals[i]);
        csv.row(row);
    }
}

inline json report_json(const Context& ctx, const NsAnalysis& an) {
    const NSReport& r = an.report;
    json j;
    j["schema_version"] = kSchemaVersion;
    j["tool"] = std::string(kToolName) + " " + kToolVersion;
    j["tolerances"] = tolerances_json(ctx);
    j["r"] = r.r;
    j["eps"] = r.eps;
    j["alpha0"] = r.alpha0;
    j["a_prime_alpha0"] = r.a_prime_alpha0;
    j["b0"] = r.b0;
    j["beta_eps"] = r.beta_eps;
    j["sigma"] = {r.sigma[0], r.sigma[1]};
    j["lambda"] = {{"re", r.lambda.real()}, {"im", r.lambda.imag()}};
    j["theta_eps"] = r.theta_eps;
    j["rho"] = (std::norm(r.lambda) - 1.0) / std::pow(r.eps, r.r);
    j["resonance_flags"] = r.resonance_flags;
    j["normal_frame"] = {{r.normal_frame(0, 0), r.normal_frame(0, 1)},
                         {r.normal_frame(1, 0), r.normal_frame(1, 1)}};
    auto cj = [](cplx z) { return json{{"re", z.real()}, {"im", z.imag()}}; };
    j["g20"] = cj(r.g20);
    j["g11"] = cj(r.g11);
    j["g02"] = cj(r.g02);
    j["g21"] = cj(r.g21);
    j["c1"] = cj(r.c1);
    j["ell1"] = r.ell1;
    j["ell1_expanded"] = r.ell1_expanded;
    j["ell1_noise"] = r.ell1_noise;
    if (r.series_fitted)
        j["ell1_series"] = {{"ell11", r.ell11}, {"ell12", r.ell12}, {"fit_residual", r.fit_residual}};
    j["transversality"] = r.a_prime_alpha0;
    j["verdict"] = to_string(r.verdict);
    j["classification"] = {{"alpha", an.alpha_requested},
                           {"fixed_point", an.at_alpha.fixed_point_attracting ? "attracting" : "repelling"},
                           {"curve_exists", an.at_alpha.curve_exists},
                           {"curve_stability", !an.at_alpha.curve_exists        ? "none"
                                               : an.at_alpha.curve_attracting ? "attracting"
                                                                               : "repelling"},
                           {"inconclusive", an.at_alpha.inconclusive}};
    return j;
}

inline NsAnalysis analyze(const RunManifest&, Context& ctx) {
    std::vector<double> series;
    if (auto it = ctx.set.find("series_eps"); it != ctx.set.end())
        series = parse_list(it->second, "series_eps");
    NsOptions ns = ctx.ns;
    ns.flow.abs_tol = ns.flow.rel_tol = 1e-12;
    return ns_analyze(ctx.sys, ctx.p, default_guess(ctx.sys, ctx), ns, series);
}

inline void cmd_ns_analyze(const RunManifest& m, Context& ctx) {
    const NsAnalysis an = analyze(m, ctx);
    write_text_file(out_path(m, "ns_report.json"), report_json(ctx, an).dump(2) + "\n");
}

inline void cmd_curve(const RunManifest& m, Context& ctx) {
    const NsAnalysis an = analyze(m, ctx);
    SideClassification side = an.at_alpha;
    if (!side.curve_exists && !m.backward)
        throw AnalysisError("curve: no invariant curve classified at this parameter point");

    ParameterPoint p = ctx.p;
    NsOptions ns = ctx.ns;
    ns.flow.abs_tol = ns.flow.rel_tol = 1e-12;
    const Vec sigma = find_fixed_point(ctx.sys, an.report.sigma, p, ns, an.report.r);
    const bool attracting = m.backward ? false : side.curve_attracting;
    const double dtau = std::abs((p.alpha - an.report.beta_eps) * an.report.a_prime_alpha0) *
                        std::pow(p.epsilon, an.report.r);
    const double hint = std::sqrt(dtau / std::max(std::abs(an.report.ell1), 1e-12));
    InvariantCurve curve = find_curve(ctx.sys, p, sigma, attracting, hint, ctx.curve);

    CsvWriter csv(out_path(m, "curve.csv"), {"angle", "x1", "x2"}, ctx.header);
    for (std::size_t i = 0; i < curve.nodes.size(); ++i)
        csv.row({curve.angles[i], curve.nodes[i][0], curve.nodes[i][1]});

    json j;
    j["schema_version"] = kSchemaVersion;
    j["tool"] = std::string(kToolName) + " " + kToolVersion;
    j["tolerances"] = tolerances_json(ctx);
    j["center"] = {curve.center[0], curve.center[1]};
    j["residual"] = curve.residual;
    j["stability"] = curve.attracting ? "attracting" : "repelling";
    j["rotation_number"] = curve.rotation_number;
    j["seed_radius_hint"] = hint;
    j["sweeps"] = curve.sweeps;
    j["fourier"] = {{"a0", curve.fourier.a0}, {"cos", curve.fourier.ac}, {"sin", curve.fourier.as}};
    write_text_file(out_path(m, "curve.json"), j.dump(2) + "\n");
}

inline void cmd_sweep(const RunManifest& m, Context& ctx) {
    std::vector<double> alphas;
    {
        if (!ctx.set.count("alpha_grid")) throw ConfigError("sweep needs --set alpha_grid=lo,hi,count");
        const auto v = parse_list(ctx.set["alpha_grid"], "alpha_grid");
        if (v.size() != 3) throw ConfigError("--set alpha_grid needs lo,hi,count");
        for (int i = 0; i < static_cast<int>(v[2]); ++i)
            alphas.push_back(v[2] == 1 ? v[0] : v[0] + (v[1] - v[0]) * i / (v[2] - 1));
    }
    std::vector<double> eps_list{ctx.p.epsilon};
    if (auto it = ctx.set.find("eps_list"); it != ctx.set.end())
        eps_list = parse_list(it->second, "eps_list");
    std::vector<double> b_list;
    if (auto it = ctx.set.find("b_list"); it != ctx.set.end())
        b_list = parse_list(it->second, "b_list");
    else
        b_list.push_back(ctx.p.extra("b", -5.0));

    struct Point {
        double alpha, eps, b;
    };
    std::vector<Point> pts;
    for (double e : eps_list)
        for (double bb : b_list)
            for (double a : alphas) pts.push_back({a, e, bb});

    // one analysis per (eps, b) pair feeds all alpha rows of that pair;
    // pairs are independent and run on concurrent workers, merged in input
    // order for deterministic output
    NsOptions ns = ctx.ns;
    ns.flow.abs_tol = ns.flow.rel_tol = 1e-12;
    std::vector<std::pair<double, double>> pairs;
    for (double e : eps_list)
        for (double bb : b_list) pairs.emplace_back(e, bb);
    std::vector<std::future<NSReport>> jobs;
    for (const auto& [e, bb] : pairs)
        jobs.push_back(std::async(std::launch::async, [&, e = e, bb = bb] {
            ParameterPoint p = ctx.p;
            p.epsilon = e;
            p.extras["b"] = bb;
            return ns_analyze(ctx.sys, p, default_guess(ctx.sys, ctx), ns, {}).report;
        }));
    std::map<std::pair<double, double>, NSReport> cache;
    for (std::size_t i = 0; i < pairs.size(); ++i) cache[pairs[i]] = jobs[i].get();

    CsvWriter csv(out_path(m, "sweep.csv"),
                  {"alpha", "epsilon", "b", "beta", "ell1", "fp_attracting", "curve_exists",
                   "curve_attracting"},
                  ctx.header);
    for (const auto& pt : pts) {
        const NSReport& rep = cache[{pt.eps, pt.b}];
        const SideClassification side = classify(rep, pt.alpha);
        csv.row({pt.alpha, pt.eps, pt.b, rep.beta_eps, rep.ell1,
                 side.fixed_point_attracting ? 1.0 : 0.0, side.curve_exists ? 1.0 : 0.0,
                 side.curve_attracting ? 1.0 : 0.0});
    }
}

}  // namespace app_detail

inline int run(const RunManifest& m) {
    using app_detail::json;
    try {
        app_detail::Context ctx = app_detail::make_context(m);
        if (m.command == "simulate") app_detail::cmd_simulate(m, ctx);
        else if (m.command == "section") app_detail::cmd_section(m, ctx);
        else if (m.command == "melnikov") app_detail::cmd_melnikov(m, ctx);
        else if (m.command == "fixed-point") app_detail::cmd_fixed_point(m, ctx);
        else if (m.command == "ns-analyze") app_detail::cmd_ns_analyze(m, ctx);
        else if (m.command == "curve") app_detail::cmd_curve(m, ctx);
        else if (m.command == "sweep") app_detail::cmd_sweep(m, ctx);
        else throw ConfigError("unknown command '" + m.command + "'");
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << json{{"error", {{"type", "config"}, {"message", e.what()}}}}.dump() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", {{"type", "analysis"}, {"message", e.what()}}}}.dump() << "\n";
        return 1;
    }
}

}  // namespace tscope
