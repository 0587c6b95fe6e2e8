#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tscope/app.hpp"

using namespace tscope;
namespace fs = std::filesystem;

namespace {
std::string write_config(const std::string& name, const std::string& text) {
    const fs::path dir = fs::temp_directory_path() / "tscope-test";
    fs::create_directories(dir);
    const fs::path p = dir / name;
    std::ofstream out(p);
    out << text;
    return p.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string outdir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / "tscope-test" / tag;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}
}  // namespace

TEST_CASE("melnikov command on a zero system writes an all-zero grid") {
    const std::string cfg = write_config("zero.cfg", R"(torus-scope-config v1
system = inline
dim = 2
period = 6.283185307179586
order = 2
domain = -10 10 -10 10
[zone 0]
f1.matrix = 0 0 0 0
f2.matrix = 0 0 0 0
)");
    RunManifest m;
    m.command = "melnikov";
    m.config_path = cfg;
    m.output_dir = outdir("zero-melnikov");
    m.overrides = {{"grid_x1", "-1,1,3"}, {"grid_x2", "-1,1,3"}, {"epsilon", "0.1"}};
    REQUIRE(run(m) == 0);
    std::ifstream in(fs::path(m.output_dir) / "melnikov.csv");
    REQUIRE(in.good());
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line[0] == 'x') continue;
        ++rows;
        std::istringstream is(line);
        std::string cell;
        int col = 0;
        while (std::getline(is, cell, ',')) {
            if (col >= 2) CHECK(std::stod(cell) == 0.0);
            ++col;
        }
    }
    CHECK(rows == 9);
}

TEST_CASE("identical manifests produce byte-identical output") {
    const std::string cfg = write_config("pwl.cfg", "torus-scope-config v1\nsystem = pwl3d\n");
    RunManifest m;
    m.command = "melnikov";
    m.config_path = cfg;
    m.overrides = {{"b", "-5"}, {"grid_x1", "1,6,4"}, {"grid_x2", "-3,4,4"}, {"alpha", "0.1"}};
    m.output_dir = outdir("det-a");
    REQUIRE(run(m) == 0);
    const std::string a = slurp(m.output_dir + "/melnikov.csv");
    m.output_dir = outdir("det-b");
    REQUIRE(run(m) == 0);
    const std::string b = slurp(m.output_dir + "/melnikov.csv");
    CHECK(a == b);
    CHECK(a.find("# tol.abs") != std::string::npos);
    CHECK(a.find(kToolVersion) != std::string::npos);
}

TEST_CASE("exit codes distinguish config and analysis errors") {
    RunManifest bad_cfg;
    bad_cfg.command = "melnikov";
    bad_cfg.config_path = write_config("broken.cfg", "not a header\n");
    bad_cfg.output_dir = outdir("err-a");
    CHECK(run(bad_cfg) == 2);

    RunManifest missing;
    missing.command = "melnikov";
    missing.config_path = "/nonexistent/path.cfg";
    missing.output_dir = outdir("err-b");
    CHECK(run(missing) == 2);

    RunManifest bad_analysis;  // ns-analyze needs a nonzero eps
    bad_analysis.command = "ns-analyze";
    bad_analysis.config_path = write_config("pwl.cfg", "torus-scope-config v1\nsystem = pwl3d\n");
    bad_analysis.output_dir = outdir("err-c");
    bad_analysis.overrides = {{"b", "-5"}, {"epsilon", "0"}};
    CHECK(run(bad_analysis) == 1);
}

TEST_CASE("ns-analyze reports the repelling-curve verdict for b < 0") {
    const std::string cfg = write_config("pwl.cfg", "torus-scope-config v1\nsystem = pwl3d\n");
    RunManifest m;
    m.command = "ns-analyze";
    m.config_path = cfg;
    m.output_dir = outdir("ns");
    const double eps = 1.0 / 40.0;
    const double alpha = eps * (M_PI * M_PI / 8.0 - 2.0);
    m.overrides = {{"b", "-5"}, {"epsilon", fmt17(eps)}, {"alpha", fmt17(alpha)}};
    REQUIRE(run(m) == 0);
    const auto j = nlohmann::json::parse(slurp(m.output_dir + "/ns_report.json"));
    CHECK(j["schema_version"] == kSchemaVersion);
    CHECK(j["verdict"] == "subcritical-repelling-curve");
    CHECK(j["r"] == 1);
    CHECK(std::abs(double(j["alpha0"])) < 2e-3);
    CHECK(double(j["classification"]["alpha"]) == doctest::Approx(alpha));
    CHECK(j["classification"]["curve_exists"] == true);
    CHECK(j["classification"]["curve_stability"] == "repelling");
    CHECK(j["classification"]["fixed_point"] == "attracting");
    CHECK(std::abs(double(j["lambda"]["re"]) * double(j["lambda"]["re"]) +
                   double(j["lambda"]["im"]) * double(j["lambda"]["im"]) - 1.0) < 1e-8);
}

TEST_CASE("sweep verdict flips exactly once across the critical parameter") {
    const std::string cfg = write_config("pwl.cfg", "torus-scope-config v1\nsystem = pwl3d\n");
    RunManifest m;
    m.command = "sweep";
    m.config_path = cfg;
    m.output_dir = outdir("sweep");
    m.overrides = {{"b", "5"}, {"epsilon", "0.02"}, {"alpha_grid", "-0.1,0.02,13"}};
    REQUIRE(run(m) == 0);
    std::ifstream in(fs::path(m.output_dir) / "sweep.csv");
    std::string line;
    int flips = 0;
    int prev = -1;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line[0] == 'a') continue;
        std::istringstream is(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(is, cell, ',')) row.push_back(std::stod(cell));
        const int exists = static_cast<int>(row[6]);
        if (prev >= 0 && exists != prev) ++flips;
        prev = exists;
    }
    CHECK(flips == 1);
}

TEST_CASE("simulate and section commands run on the 3D form") {
    const std::string cfg =
        write_config("cart.cfg", "torus-scope-config v1\nsystem = pwl3d-cartesian\n");
    RunManifest m;
    m.command = "simulate";
    m.config_path = cfg;
    m.output_dir = outdir("sim");
    m.overrides = {{"b", "-5"},
                   {"epsilon", "0.025"},
                   {"alpha", fmt17(0.025 * (M_PI * M_PI / 8.0 - 2.0))},
                   {"x0", "3.669234340877,0,0.48488236396962971"},
                   {"t_end", "25"}};
    REQUIRE(run(m) == 0);
    const std::string traj = slurp(m.output_dir + "/trajectory.csv");
    CHECK(traj.find("t,x1,x2,x3") != std::string::npos);
    CHECK(traj.find("# switch t =") != std::string::npos);

    m.command = "section";
    m.output_dir = outdir("sec");
    REQUIRE(run(m) == 0);
    std::ifstream in(fs::path(m.output_dir) / "section.csv");
    std::string line;
    int hits = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line[0] == 'n') continue;
        ++hits;
        std::istringstream is(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(is, cell, ',')) row.push_back(std::stod(cell));
        CHECK(row[1] > 0.0);               // x > 0 side
        CHECK(std::abs(row[2]) <= 1e-9);   // on the section y = 0
    }
    CHECK(hits >= 3);
}

TEST_CASE("curve command writes the node list and sidecar") {
    const std::string cfg = write_config("pwl.cfg", "torus-scope-config v1\nsystem = pwl3d\n");
    RunManifest m;
    m.command = "curve";
    m.config_path = cfg;
    m.output_dir = outdir("curve");
    const double eps = 1.0 / 40.0;
    m.overrides = {{"b", "-5"},
                   {"epsilon", fmt17(eps)},
                   {"alpha", fmt17(eps * (M_PI * M_PI / 8.0 - 2.0))},
                   {"fourier_modes", "48"},
                   {"nodes", "192"}};
    REQUIRE(run(m) == 0);
    const auto j = nlohmann::json::parse(slurp(m.output_dir + "/curve.json"));
    CHECK(j["stability"] == "repelling");
    CHECK(double(j["residual"]) <= 1e-6);
    CHECK(j["fourier"]["cos"].size() == 48);
    std::ifstream in(fs::path(m.output_dir) / "curve.csv");
    std::string line;
    int rows = 0;
    while (std::getline(in, line))
        if (!line.empty() && line[0] != '#' && line[0] != 'a') ++rows;
    CHECK(rows == 192);
}
