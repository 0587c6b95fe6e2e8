// torus-scope command line: wires config ingestion, the analysis pipeline and
// file outputs.  See README for the config grammar and output formats.

#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tscope/app.hpp"

int main(int argc, char** argv) {
    CLI::App app{"torus-scope: invariant torus detection for periodic piecewise-smooth systems"};
    app.require_subcommand(1);

    tscope::RunManifest manifest;
    std::vector<std::string> sets, tols;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", manifest.config_path, "config file (torus-scope-config v1)")
            ->required();
        sub->add_option("--out", manifest.output_dir, "output directory (default .)");
        sub->add_option("--set", sets, "override key=value (repeatable)");
        sub->add_option("--tol", tols, "tolerance name=value (repeatable)");
        sub->add_option("--seed-radius", manifest.seed_radius, "initial ring radius for curve runs");
        sub->add_flag("--backward", manifest.backward, "force inverse-map iteration in curve runs");
    };

    for (const char* name : {"simulate", "section", "melnikov", "fixed-point", "ns-analyze",
                             "curve", "sweep"}) {
        CLI::App* sub = app.add_subcommand(name);
        add_common(sub);
        sub->callback([&manifest, name] { manifest.command = name; });
    }

    CLI11_PARSE(app, argc, argv);

    for (const std::string& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) {
            std::cerr << "{\"error\":{\"type\":\"config\",\"message\":\"--set expects key=value\"}}\n";
            return 2;
        }
        manifest.overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    for (const std::string& s : tols) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) {
            std::cerr << "{\"error\":{\"type\":\"config\",\"message\":\"--tol expects name=value\"}}\n";
            return 2;
        }
        try {
            manifest.tolerances[s.substr(0, eq)] = std::stod(s.substr(eq + 1));
        } catch (const std::exception&) {
            std::cerr << "{\"error\":{\"type\":\"config\",\"message\":\"bad --tol value\"}}\n";
            return 2;
        }
    }

    return tscope::run(manifest);
}
