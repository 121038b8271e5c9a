// slowecho CLI: config-driven scenario runs, sweeps and point fits.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "slowecho/analysis.hpp"
#include "slowecho/scenarios.hpp"
#include "slowecho/version.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 2;
constexpr int exit_numeric = 3;
constexpr int exit_analysis = 4;

void print_report(const nlohmann::json& report, const std::string& format) {
    if (format == "csv") {
        for (const auto& [key, value] : report.items())
            std::cout << key << "," << value.dump() << "\n";
    } else {
        std::cout << report.dump(2) << "\n";
    }
}

std::vector<std::pair<double, double>> read_points_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw slowecho::config_error("cannot open points file " + path);
    std::vector<std::pair<double, double>> pts;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string a, b;
        if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',')) continue;
        try {
            pts.emplace_back(std::stod(a), std::stod(b));
        } catch (const std::exception&) {
            continue;  // header or stray text row
        }
    }
    return pts;
}

struct CommonOpts {
    std::string config_path;
    std::string out_dir = "out";
    std::string probes;
    std::string format;
    int threads = 0;
};

void apply_overrides(slowecho::ScenarioConfig& cfg, const CommonOpts& opts) {
    if (opts.threads > 0) cfg.threads = opts.threads;
    if (!opts.format.empty()) {
        if (opts.format != "csv" && opts.format != "json")
            throw slowecho::config_error("--format must be csv or json");
        cfg.report_format = opts.format;
    }
    if (!opts.probes.empty()) {
        cfg.probe_z.clear();
        std::istringstream in(opts.probes);
        std::string item;
        while (std::getline(in, item, ',')) {
            try {
                cfg.probe_z.push_back(std::stoi(item));
            } catch (const std::exception&) {
                throw slowecho::config_error("--probes expects comma-separated z indices");
            }
        }
        for (int z : cfg.probe_z)
            if (z < 0 || z > cfg.grids.nz)
                throw slowecho::config_error("--probes index out of range");
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"slowecho - 1-D Maxwell-Bloch simulator for slow-light photon echoes"};
    app.set_version_flag("--version", slowecho::version);
    app.require_subcommand(1);

    CommonOpts run_opts, sweep_opts;
    auto add_common = [](CLI::App* cmd, CommonOpts& o) {
        cmd->add_option("--config", o.config_path, "scenario config file")->required();
        cmd->add_option("--out", o.out_dir, "output directory")->required();
        cmd->add_option("--probes", o.probes, "comma-separated probe z indices");
        cmd->add_option("--threads", o.threads, "worker threads (0 = hardware)");
        cmd->add_option("--format", o.format, "stdout report format: csv|json");
    };
    auto* cmd_run =
        app.add_subcommand("run", "single_run, fig2_pair or backward_control scenario");
    add_common(cmd_run, run_opts);
    auto* cmd_sweep = app.add_subcommand("sweep", "fig3_sweep or fig4_scan scenario");
    add_common(cmd_sweep, sweep_opts);

    std::string points_path, c_mode_str = "min-tau", fit_format = "json";
    auto* cmd_fit = app.add_subcommand("fit", "exponential fit of (tau_g, intensity) points");
    cmd_fit->add_option("--points", points_path, "CSV with tau_g,intensity rows")->required();
    cmd_fit->add_option("--c-mode", c_mode_str, "fixed:<value> or min-tau");
    cmd_fit->add_option("--format", fit_format, "stdout report format: csv|json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }

    try {
        if (cmd_run->parsed() || cmd_sweep->parsed()) {
            const CommonOpts& opts = cmd_run->parsed() ? run_opts : sweep_opts;
            auto cfg = slowecho::load_scenario_config(opts.config_path);
            apply_overrides(cfg, opts);

            const bool is_sweep = cfg.scenario == slowecho::ScenarioKind::fig3_sweep ||
                                  cfg.scenario == slowecho::ScenarioKind::fig4_scan;
            if (cmd_sweep->parsed() && !is_sweep)
                throw slowecho::config_error("sweep: config scenario must be fig3_sweep "
                                             "or fig4_scan");
            if (cmd_run->parsed() && is_sweep)
                throw slowecho::config_error("run: use the sweep subcommand for "
                                             "fig3_sweep/fig4_scan configs");

            const auto report = slowecho::run_scenario(cfg, opts.out_dir);
            print_report(report, cfg.report_format);
        } else if (cmd_fit->parsed()) {
            slowecho::FitCMode mode = slowecho::FitCMode::min_tau();
            if (c_mode_str.rfind("fixed:", 0) == 0) {
                try {
                    mode = slowecho::FitCMode::fixed(std::stod(c_mode_str.substr(6)));
                } catch (const std::exception&) {
                    throw slowecho::config_error("--c-mode fixed:<value> needs a number");
                }
            } else if (c_mode_str != "min-tau") {
                throw slowecho::config_error("--c-mode must be fixed:<value> or min-tau");
            }
            const auto fit = slowecho::fit_exponential(read_points_csv(points_path), mode);
            print_report({{"a", fit.a}, {"b", fit.b}, {"c", fit.c},
                          {"r_squared", fit.r_squared}},
                         fit_format);
        }
    } catch (const slowecho::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const slowecho::numeric_error& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return exit_numeric;
    } catch (const slowecho::analysis_error& e) {
        std::cerr << "analysis error: " << e.what() << "\n";
        return exit_analysis;
    }
    return exit_ok;
}
