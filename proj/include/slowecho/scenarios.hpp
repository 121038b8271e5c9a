// scenarios.hpp - config-driven reproductions of the slow-light photon-echo
// experiments: single runs, the with/without-burn pair, the hole-depth sweep
// with exponential fit, the H-duration scan and the backward-burn control.
// Scenario runs write deterministic CSV/JSON/SVG artifacts plus a manifest.
#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "slowecho/analysis.hpp"
#include "slowecho/burn.hpp"
#include "slowecho/core.hpp"
#include "slowecho/errors.hpp"
#include "slowecho/propagation.hpp"
#include "slowecho/version.hpp"

namespace slowecho {

enum class ScenarioKind { single_run, fig2_pair, fig3_sweep, fig4_scan, backward_control };

struct ScenarioConfig {
    ScenarioKind scenario = ScenarioKind::single_run;
    MediumSpec medium;
    Grids grids;
    LineMode line_mode = LineMode::flat;
    double line_fwhm = 0.0;
    PulseSequence sequence;
    std::optional<BurnConfig> burn_cfg;
    std::vector<double> sweep_values;
    std::vector<int> probe_z;
    int threads = 0;
    std::string report_format = "json";  // stdout flavor: json | csv
    std::string raw_text;                // raw config text, hashed into the manifest
};

namespace detail {

inline std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

inline std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

// flat dotted-key config text: `key = value`, one per line, '#' comments
class KeyValues {
public:
    explicit KeyValues(const std::string& text) {
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw config_error("config line " + std::to_string(lineno) +
                                   ": expected 'key = value'");
            const std::string key = trim(line.substr(0, eq));
            const std::string val = trim(line.substr(eq + 1));
            if (key.empty() || val.empty())
                throw config_error("config line " + std::to_string(lineno) +
                                   ": empty key or value");
            if (!kv_.emplace(key, val).second)
                throw config_error("config: duplicate key '" + key + "'");
        }
    }

    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    bool has_prefix(const std::string& prefix) const {
        auto it = kv_.lower_bound(prefix);
        return it != kv_.end() && it->first.compare(0, prefix.size(), prefix) == 0;
    }

    std::string str(const std::string& key) {
        auto it = kv_.find(key);
        if (it == kv_.end()) throw config_error("config: missing key '" + key + "'");
        used_.insert(key);
        return it->second;
    }

    std::string str_or(const std::string& key, const std::string& fallback) {
        return has(key) ? str(key) : fallback;
    }

    double number(const std::string& key) {
        const std::string v = str(key);
        try {
            size_t pos = 0;
            const double x = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return x;
        } catch (const std::exception&) {
            throw config_error("config: key '" + key + "' is not a number: " + v);
        }
    }

    double number_or(const std::string& key, double fallback) {
        return has(key) ? number(key) : fallback;
    }

    int integer(const std::string& key) {
        const double x = number(key);
        const int i = static_cast<int>(x);
        if (x != i) throw config_error("config: key '" + key + "' must be an integer");
        return i;
    }

    int integer_or(const std::string& key, int fallback) {
        return has(key) ? integer(key) : fallback;
    }

    bool boolean_or(const std::string& key, bool fallback) {
        if (!has(key)) return fallback;
        const std::string v = str(key);
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw config_error("config: key '" + key + "' must be true/false");
    }

    std::vector<double> number_list(const std::string& key) {
        std::vector<double> out;
        std::istringstream in(str(key));
        std::string item;
        while (std::getline(in, item, ',')) {
            item = trim(item);
            if (item.empty()) continue;
            try {
                out.push_back(std::stod(item));
            } catch (const std::exception&) {
                throw config_error("config: bad list entry '" + item + "' in '" + key + "'");
            }
        }
        return out;
    }

    void reject_unused() const {
        for (const auto& [key, val] : kv_)
            if (!used_.count(key)) throw config_error("config: unknown key '" + key + "'");
    }

private:
    std::map<std::string, std::string> kv_;
    std::set<std::string> used_;
};

inline Pulse parse_pulse(KeyValues& kv, const std::string& prefix, PulseLabel label) {
    Pulse p;
    p.label = label;
    p.t_start_us = kv.number(prefix + ".t_start_us");
    p.duration_us = kv.number(prefix + ".duration_us");
    const std::string shape = kv.str_or(prefix + ".shape", "gaussian");
    if (shape == "gaussian")
        p.shape = PulseShape::gaussian;
    else if (shape == "square")
        p.shape = PulseShape::square;
    else
        throw config_error("config: bad pulse shape '" + shape + "'");
    p.detuning = kv.number_or(prefix + ".detuning", 0.0);
    const bool has_rabi = kv.has(prefix + ".rabi_peak");
    const bool has_area = kv.has(prefix + ".area_pi");
    if (has_rabi == has_area)
        throw config_error("config: pulse '" + prefix +
                           "' needs exactly one of rabi_peak or area_pi");
    p.rabi_peak = has_rabi ? kv.number(prefix + ".rabi_peak")
                           : Pulse::rabi_for_area(kv.number(prefix + ".area_pi") *
                                                      std::numbers::pi,
                                                  p.duration_us, p.shape);
    return p;
}

inline uint64_t fnv1a(const std::string& text) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace detail

inline ScenarioConfig parse_scenario_config(const std::string& text) {
    detail::KeyValues kv(text);
    ScenarioConfig cfg;
    cfg.raw_text = text;

    const std::string kind = kv.str("scenario");
    if (kind == "single_run")
        cfg.scenario = ScenarioKind::single_run;
    else if (kind == "fig2_pair")
        cfg.scenario = ScenarioKind::fig2_pair;
    else if (kind == "fig3_sweep")
        cfg.scenario = ScenarioKind::fig3_sweep;
    else if (kind == "fig4_scan")
        cfg.scenario = ScenarioKind::fig4_scan;
    else if (kind == "backward_control")
        cfg.scenario = ScenarioKind::backward_control;
    else
        throw config_error("config: unknown scenario '" + kind + "'");

    cfg.medium.length_mm = kv.number_or("medium.length_mm", 5.0);
    cfg.medium.optical_depth_d0 = kv.number_or("medium.optical_depth_d0", 2.2);
    cfg.medium.t1_opt_us = kv.number_or("medium.t1_opt_us", 160.0);
    cfg.medium.t2_opt_us = kv.number_or("medium.t2_opt_us", 12.0);
    cfg.medium.shelf_branch_b = kv.number_or("medium.shelf_branch_b", 0.5);
    cfg.medium.shelf_lifetime_us = kv.number_or("medium.shelf_lifetime_us", 1e9);
    cfg.medium.repump_rate_per_us = kv.number_or("medium.repump_rate_per_us", 0.0);
    cfg.medium.validate();

    cfg.grids.nz = kv.integer_or("grids.nz", 128);
    cfg.grids.n_delta = kv.integer_or("grids.n_delta", 301);
    cfg.grids.delta_max = kv.number_or("grids.delta_max", 25.0);
    cfg.grids.dt_us = kv.number_or("grids.dt_us", 0.002);

    const std::string line = kv.str_or("line.mode", "flat");
    if (line == "flat") {
        cfg.line_mode = LineMode::flat;
    } else if (line == "gaussian") {
        cfg.line_mode = LineMode::gaussian;
        cfg.line_fwhm = kv.number("line.fwhm");
    } else {
        throw config_error("config: bad line.mode '" + line + "'");
    }

    cfg.sequence.t_end_us = kv.number("sequence.t_end_us");
    cfg.sequence.pulses.push_back(detail::parse_pulse(kv, "sequence.d", PulseLabel::d));
    if (kv.has_prefix("sequence.r."))
        cfg.sequence.pulses.push_back(detail::parse_pulse(kv, "sequence.r", PulseLabel::r));
    cfg.grids = Grids::with_horizon(cfg.grids, cfg.sequence.t_end_us);
    cfg.grids.validate();

    if (kv.has_prefix("burn.")) {
        BurnConfig b;
        const std::string model = kv.str("burn.model");
        if (model == "rate_saturation")
            b.model = BurnModel::rate_saturation;
        else if (model == "damped_rabi")
            b.model = BurnModel::damped_rabi;
        else
            throw config_error("config: bad burn.model '" + model + "'");
        b.hole_hwhm = kv.number("burn.hole_hwhm");
        b.h_pulse.label = PulseLabel::h;
        b.h_pulse.shape = PulseShape::square;
        b.h_pulse.duration_us = kv.number("burn.h.duration_us");
        b.h_pulse.rabi_peak = kv.number("burn.h.rabi_peak");
        b.h_pulse.t_start_us = -(kv.number_or("burn.wait_after_h_us", 500.0) +
                                 b.h_pulse.duration_us);
        b.wait_after_h_us = kv.number_or("burn.wait_after_h_us", 500.0);
        b.repump_on = kv.boolean_or("burn.repump_on", true);
        const std::string dir = kv.str_or("burn.direction", "forward");
        if (dir == "forward")
            b.direction = BurnDirection::forward;
        else if (dir == "backward")
            b.direction = BurnDirection::backward;
        else
            throw config_error("config: bad burn.direction '" + dir + "'");
        b.t_damp_us = kv.number_or("burn.t_damp_us", 50.0);
        if (kv.has("burn.i_sat")) b.i_sat = kv.number("burn.i_sat");
        b.allow_short_wait = kv.boolean_or("burn.allow_short_wait", false);
        cfg.burn_cfg = b;
    }

    if (kv.has("sweep.values")) cfg.sweep_values = kv.number_list("sweep.values");
    if ((cfg.scenario == ScenarioKind::fig3_sweep || cfg.scenario == ScenarioKind::fig4_scan) &&
        cfg.sweep_values.empty())
        throw config_error("config: sweep.values must be nonempty for sweep/scan scenarios");

    if (kv.has("probes")) {
        for (double v : kv.number_list("probes")) {
            const int z = static_cast<int>(v);
            if (z < 0 || z > cfg.grids.nz)
                throw config_error("config: probe index out of range");
            cfg.probe_z.push_back(z);
        }
    }
    cfg.threads = kv.integer_or("threads", 0);
    cfg.report_format = kv.str_or("output.format", "json");
    if (cfg.report_format != "json" && cfg.report_format != "csv")
        throw config_error("config: output.format must be json or csv");

    kv.reject_unused();
    return cfg;
}

inline ScenarioConfig load_scenario_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_scenario_config(ss.str());
}

// ---------------------------------------------------------------------------
// single run

struct RunResult {
    FieldRecord record;
    std::optional<PopulationMap> population;
    double kappa = 0.0;
    double optical_depth_d = 0.0;
    double tau_g_us = 0.0;       // centroid delay of the transmitted data pulse
    bool tau_valid = false;
    double v_g_km_s = 0.0;
    double eta = 0.0;
    std::vector<EchoEvent> echoes;
    double echo_efficiency = 0.0;      // primary window
    double echo_efficiency_sum = 0.0;  // all windows
    double predicted_tau_g_us = 0.0;   // Kramers-Kronig predictor (burned runs)
};

namespace detail {

inline TimeWindow data_absorption_window(const PulseSequence& seq) {
    const Pulse* d = seq.find(PulseLabel::d);
    double hi = d->t_render_hi() + 4.0 * d->duration_us;
    for (const auto& p : seq.pulses)
        if (p.t_render_lo() > d->t_center()) hi = std::min(hi, p.t_render_lo());
    return {std::max(0.0, d->t_render_lo()), hi};
}

inline void analyze_run(RunResult& rr, const ScenarioConfig& cfg) {
    const auto window = data_absorption_window(cfg.sequence);
    rr.optical_depth_d = optical_depth(rr.record, window);
    rr.tau_g_us = measure_data_delay(rr.record, cfg.sequence);
    rr.tau_valid = rr.tau_g_us > 0.0;
    if (rr.tau_valid) {
        rr.v_g_km_s = group_velocity(rr.tau_g_us, cfg.medium);
        rr.eta = slow_factor(rr.v_g_km_s);
    }
    rr.echoes = detect_echoes(rr.record, cfg.sequence);
    rr.echo_efficiency = rr.echoes.empty() ? 0.0 : rr.echoes.front().efficiency;
    rr.echo_efficiency_sum = 0.0;
    for (const auto& e : rr.echoes) rr.echo_efficiency_sum += e.efficiency;
}

} // namespace detail

inline RunResult run_single(const ScenarioConfig& cfg) {
    auto seq = validate_sequence(cfg.sequence, cfg.grids);
    auto weights = build_weights(cfg.grids, cfg.line_mode, cfg.line_fwhm);

    RunResult rr;
    if (cfg.burn_cfg) {
        rr.population = burn(cfg.medium, cfg.grids, weights, *cfg.burn_cfg);
        try {
            rr.predicted_tau_g_us =
                predicted_group_delay(*rr.population, cfg.medium, weights,
                                      cfg.burn_cfg->hole_hwhm);
        } catch (const analysis_error&) {
            rr.predicted_tau_g_us = 0.0;
        }
    }
    const auto coupling = calibrate_coupling(cfg.medium, cfg.grids, weights, cfg.threads);
    rr.kappa = coupling.kappa;

    MarchOptions opts;
    opts.probe_z = cfg.probe_z;
    opts.threads = cfg.threads;
    const auto omega_in = render_sequence(seq, cfg.grids);
    rr.record = march(omega_in, cfg.medium, cfg.grids, weights,
                      rr.population ? &*rr.population : nullptr, coupling, opts);

    ScenarioConfig acfg = cfg;
    acfg.sequence = seq;
    detail::analyze_run(rr, acfg);
    return rr;
}

// ---------------------------------------------------------------------------
// paired and swept scenarios

struct PairResult {
    RunResult with_burn;
    RunResult without_burn;
    double enhancement_ratio = 0.0;  // primary echo efficiency ratio
    bool ratio_valid = false;
};

inline PairResult run_fig2_pair(const ScenarioConfig& cfg) {
    if (!cfg.burn_cfg) throw config_error("fig2_pair: burn configuration required");
    auto seq = validate_sequence(cfg.sequence, cfg.grids);
    auto weights = build_weights(cfg.grids, cfg.line_mode, cfg.line_fwhm);
    const auto coupling = calibrate_coupling(cfg.medium, cfg.grids, weights, cfg.threads);
    const auto omega_in = render_sequence(seq, cfg.grids);
    MarchOptions opts;
    opts.probe_z = cfg.probe_z;
    opts.threads = cfg.threads;

    ScenarioConfig acfg = cfg;
    acfg.sequence = seq;

    PairResult pr;
    pr.with_burn.population = burn(cfg.medium, cfg.grids, weights, *cfg.burn_cfg);
    try {
        pr.with_burn.predicted_tau_g_us = predicted_group_delay(
            *pr.with_burn.population, cfg.medium, weights, cfg.burn_cfg->hole_hwhm);
    } catch (const analysis_error&) {
        pr.with_burn.predicted_tau_g_us = 0.0;
    }
    pr.with_burn.kappa = coupling.kappa;
    pr.with_burn.record = march(omega_in, cfg.medium, cfg.grids, weights,
                                &*pr.with_burn.population, coupling, opts);
    detail::analyze_run(pr.with_burn, acfg);

    pr.without_burn.kappa = coupling.kappa;
    pr.without_burn.record =
        march(omega_in, cfg.medium, cfg.grids, weights, nullptr, coupling, opts);
    detail::analyze_run(pr.without_burn, acfg);

    if (pr.without_burn.echo_efficiency > 0.0) {
        pr.enhancement_ratio = pr.with_burn.echo_efficiency / pr.without_burn.echo_efficiency;
        pr.ratio_valid = true;
    }
    return pr;
}

struct SweepRow {
    double t_h_us = 0.0;
    double hole_depth = 0.0;  // 1 - n_g at the entrance hole center
    double tau_g_us = 0.0;
    double v_g_km_s = 0.0;
    double eta = 0.0;
    double echo_efficiency = 0.0;
    double s_d_energy = 0.0;        // transmitted data-pulse energy (fig4)
    double ng_hole_center = 1.0;    // entrance n_g at line center (fig4)
};

struct SweepResult {
    std::vector<SweepRow> rows;
    FitResult fit;
    bool fit_valid = false;
    double kappa = 0.0;
    double max_pop_drift = 0.0;
};

namespace detail {

inline SweepRow sweep_point(const ScenarioConfig& cfg, const SpectralWeights& weights,
                            CouplingConstant coupling, const PulseSequence& seq,
                            const std::vector<cplx>& omega_in, const BurnConfig& bcfg,
                            double t_h, double& max_drift) {
    auto pop = burn(cfg.medium, cfg.grids, weights, bcfg);
    MarchOptions opts;
    opts.threads = cfg.threads;
    auto rec = march(omega_in, cfg.medium, cfg.grids, weights, &pop, coupling, opts);
    max_drift = std::max(max_drift, rec.max_pop_drift);

    SweepRow row;
    row.t_h_us = t_h;
    row.ng_hole_center = pop.ng(0, cfg.grids.n_delta / 2);
    row.hole_depth = 1.0 - row.ng_hole_center;
    row.tau_g_us = measure_data_delay(rec, seq);
    if (row.tau_g_us > 0.0) {
        row.v_g_km_s = group_velocity(row.tau_g_us, cfg.medium);
        row.eta = slow_factor(row.v_g_km_s);
    } else {
        row.v_g_km_s = std::numeric_limits<double>::quiet_NaN();
        row.eta = std::numeric_limits<double>::quiet_NaN();
    }
    auto echoes = detect_echoes(rec, seq);
    row.echo_efficiency = echoes.empty() ? 0.0 : echoes.front().efficiency;
    const auto w = data_absorption_window(seq);
    row.s_d_energy = trace_energy(rec.omega_out, rec.dt(), w.lo, w.hi);
    return row;
}

} // namespace detail

// Sweep over target entrance hole depths (rate-saturation model): each depth
// sets the H intensity via s = depth/(1-depth), then burn -> march ->
// (tau_g, echo efficiency), finishing with the log-linear exponential fit.
inline SweepResult run_fig3_sweep(const ScenarioConfig& cfg) {
    if (!cfg.burn_cfg) throw config_error("fig3_sweep: burn configuration required");
    if (cfg.burn_cfg->model != BurnModel::rate_saturation)
        throw config_error("fig3_sweep: sweep values are hole depths; use the "
                           "rate_saturation burn model");
    if (cfg.sweep_values.size() < 4)
        throw analysis_error("fig3_sweep: need at least 4 sweep values");

    auto seq = validate_sequence(cfg.sequence, cfg.grids);
    auto weights = build_weights(cfg.grids, cfg.line_mode, cfg.line_fwhm);
    const auto coupling = calibrate_coupling(cfg.medium, cfg.grids, weights, cfg.threads);
    const auto omega_in = render_sequence(seq, cfg.grids);

    auto values = cfg.sweep_values;
    std::sort(values.begin(), values.end());

    const double i_sat = cfg.burn_cfg->i_sat
                             ? *cfg.burn_cfg->i_sat
                             : 1.0 / (cfg.medium.t1_opt_us * cfg.medium.t2_opt_us);
    SweepResult sr;
    sr.kappa = coupling.kappa;
    for (double depth : values) {
        if (depth <= 0.0 || depth >= 1.0)
            throw config_error("fig3_sweep: hole depths must lie in (0,1)");
        BurnConfig bcfg = *cfg.burn_cfg;
        bcfg.h_pulse.rabi_peak = std::sqrt(depth / (1.0 - depth) * i_sat);
        sr.rows.push_back(detail::sweep_point(cfg, weights, coupling, seq, omega_in, bcfg,
                                              bcfg.h_pulse.duration_us, sr.max_pop_drift));
    }

    std::vector<std::pair<double, double>> pts;
    for (const auto& row : sr.rows)
        if (row.tau_g_us > 0.0 && row.echo_efficiency > 0.0)
            pts.emplace_back(row.tau_g_us, row.echo_efficiency);
    if (pts.size() < 4)
        throw analysis_error("fig3_sweep: fewer than 4 points with positive delay and echo");
    sr.fit = fit_exponential(pts, FitCMode::min_tau());
    sr.fit_valid = true;
    return sr;
}

// Scan of the H-pulse duration (damped-Rabi model): records the entrance
// hole-center population, delay, transmitted data energy and echo efficiency,
// and checks that the population extrema sit at Omega_H * T_H = k*pi.
inline SweepResult run_fig4_scan(const ScenarioConfig& cfg) {
    if (!cfg.burn_cfg) throw config_error("fig4_scan: burn configuration required");
    if (cfg.burn_cfg->model != BurnModel::damped_rabi)
        throw config_error("fig4_scan: requires the damped_rabi burn model");

    auto seq = validate_sequence(cfg.sequence, cfg.grids);
    auto weights = build_weights(cfg.grids, cfg.line_mode, cfg.line_fwhm);
    const auto coupling = calibrate_coupling(cfg.medium, cfg.grids, weights, cfg.threads);
    const auto omega_in = render_sequence(seq, cfg.grids);

    auto values = cfg.sweep_values;
    std::sort(values.begin(), values.end());

    SweepResult sr;
    sr.kappa = coupling.kappa;
    for (double t_h : values) {
        BurnConfig bcfg = *cfg.burn_cfg;
        if (t_h <= 0.0) {
            bcfg.h_pulse.rabi_peak = 0.0;  // T_H = 0 means no burn
            bcfg.h_pulse.duration_us = 1.0;
        } else {
            bcfg.h_pulse.duration_us = t_h;
        }
        sr.rows.push_back(detail::sweep_point(cfg, weights, coupling, seq, omega_in, bcfg,
                                              t_h, sr.max_pop_drift));
    }

    // interior extrema of the entrance hole-center population must sit at
    // Omega_H * T_H = k*pi within one scan step
    const double omega_h = cfg.burn_cfg->h_pulse.rabi_peak;
    for (size_t j = 1; j + 1 < sr.rows.size(); ++j) {
        const double prev = sr.rows[j - 1].ng_hole_center;
        const double cur = sr.rows[j].ng_hole_center;
        const double next = sr.rows[j + 1].ng_hole_center;
        const bool extremum = (cur < prev && cur < next) || (cur > prev && cur > next);
        if (!extremum) continue;
        const double step = std::max(sr.rows[j].t_h_us - sr.rows[j - 1].t_h_us,
                                     sr.rows[j + 1].t_h_us - sr.rows[j].t_h_us);
        const double k = std::round(omega_h * sr.rows[j].t_h_us / std::numbers::pi);
        if (std::abs(sr.rows[j].t_h_us - k * std::numbers::pi / omega_h) > step + 1e-9)
            throw analysis_error("fig4_scan: population extremum off the k*pi grid");
    }
    return sr;
}

struct TripleResult {
    RunResult forward;
    RunResult backward;
    RunResult none;
};

inline TripleResult run_backward_control(const ScenarioConfig& cfg) {
    if (!cfg.burn_cfg) throw config_error("backward_control: burn configuration required");
    TripleResult tr;
    {
        ScenarioConfig c = cfg;
        c.burn_cfg->direction = BurnDirection::forward;
        tr.forward = run_single(c);
    }
    {
        ScenarioConfig c = cfg;
        c.burn_cfg->direction = BurnDirection::backward;
        tr.backward = run_single(c);
    }
    {
        ScenarioConfig c = cfg;
        c.burn_cfg.reset();
        tr.none = run_single(c);
    }
    return tr;
}

// ---------------------------------------------------------------------------
// artifacts

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw config_error("cannot open " + path.string() + " for writing");
    out << text;
}

inline nlohmann::json echo_json(const std::vector<EchoEvent>& echoes) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : echoes)
        arr.push_back({{"t_center_us", e.t_center_us},
                       {"window_lo_us", e.window.lo},
                       {"window_hi_us", e.window.hi},
                       {"energy", e.energy},
                       {"efficiency", e.efficiency}});
    return arr;
}

inline nlohmann::json run_json(const RunResult& rr) {
    nlohmann::json j{{"kappa", rr.kappa},
                     {"optical_depth", rr.optical_depth_d},
                     {"tau_g_us", rr.tau_g_us},
                     {"echoes", echo_json(rr.echoes)},
                     {"echo_efficiency", rr.echo_efficiency},
                     {"echo_efficiency_sum", rr.echo_efficiency_sum},
                     {"max_population_drift", rr.record.max_pop_drift}};
    if (rr.tau_valid) {
        j["v_g_km_s"] = rr.v_g_km_s;
        j["eta"] = rr.eta;
    }
    if (rr.population) j["predicted_tau_g_us"] = rr.predicted_tau_g_us;
    return j;
}

inline std::string sweep_csv(const SweepResult& sr) {
    std::string out = "t_h_us,hole_depth,tau_g_us,v_g_km_s,eta,echo_efficiency\n";
    for (const auto& r : sr.rows) {
        out += fmt_g(r.t_h_us) + "," + fmt_g(r.hole_depth) + "," + fmt_g(r.tau_g_us) + "," +
               fmt_g(r.v_g_km_s) + "," + fmt_g(r.eta) + "," + fmt_g(r.echo_efficiency) + "\n";
    }
    return out;
}

// scatter + fitted curve as standalone SVG markup
inline std::string sweep_svg(const SweepResult& sr) {
    const int width = 640, height = 440, m_lo = 70, m_hi = 20;
    double x_min = 1e300, x_max = -1e300, y_min = 1e300, y_max = -1e300;
    for (const auto& r : sr.rows) {
        if (!(r.tau_g_us > 0.0)) continue;
        x_min = std::min(x_min, r.tau_g_us);
        x_max = std::max(x_max, r.tau_g_us);
        y_min = std::min(y_min, r.echo_efficiency);
        y_max = std::max(y_max, r.echo_efficiency);
    }
    if (x_min >= x_max) {
        x_min -= 0.5;
        x_max += 0.5;
    }
    if (y_min >= y_max) {
        y_min -= 0.5;
        y_max += 0.5;
    }
    const double x_pad = 0.08 * (x_max - x_min), y_pad = 0.08 * (y_max - y_min);
    x_min -= x_pad;
    x_max += x_pad;
    y_min = std::max(0.0, y_min - y_pad);
    y_max += y_pad;

    auto px = [&](double x) {
        return m_lo + (x - x_min) / (x_max - x_min) * (width - m_lo - m_hi);
    };
    auto py = [&](double y) {
        return height - m_lo - (y - y_min) / (y_max - y_min) * (height - m_lo - m_hi);
    };

    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                      std::to_string(width) + "\" height=\"" + std::to_string(height) +
                      "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    // axes
    svg += "<line x1=\"" + fmt_g(m_lo) + "\" y1=\"" + fmt_g(height - m_lo) + "\" x2=\"" +
           fmt_g(width - m_hi) + "\" y2=\"" + fmt_g(height - m_lo) +
           "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + fmt_g(m_lo) + "\" y1=\"" + fmt_g(height - m_lo) + "\" x2=\"" +
           fmt_g(m_lo) + "\" y2=\"" + fmt_g(m_hi) + "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double x = x_min + k * (x_max - x_min) / 4.0;
        const double y = y_min + k * (y_max - y_min) / 4.0;
        svg += "<text x=\"" + fmt_g(px(x)) + "\" y=\"" + fmt_g(height - m_lo + 18) +
               "\" font-size=\"11\" text-anchor=\"middle\">" + fmt_g(x) + "</text>\n";
        svg += "<text x=\"" + fmt_g(m_lo - 6) + "\" y=\"" + fmt_g(py(y) + 4) +
               "\" font-size=\"11\" text-anchor=\"end\">" + fmt_g(y) + "</text>\n";
    }
    svg += "<text x=\"" + fmt_g((m_lo + width - m_hi) / 2.0) + "\" y=\"" +
           fmt_g(height - m_lo + 38) +
           "\" font-size=\"13\" text-anchor=\"middle\">group delay tau_g (us)</text>\n";
    svg += "<text x=\"16\" y=\"" + fmt_g((m_hi + height - m_lo) / 2.0) +
           "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
           fmt_g((m_hi + height - m_lo) / 2.0) + ")\">echo efficiency</text>\n";
    // fitted curve
    if (sr.fit_valid) {
        std::string pts;
        for (int k = 0; k <= 200; ++k) {
            const double x = x_min + k * (x_max - x_min) / 200.0;
            const double y = sr.fit.a * std::exp(sr.fit.b * (x - sr.fit.c));
            if (y < y_min || y > y_max) continue;
            pts += fmt_g(px(x)) + "," + fmt_g(py(y)) + " ";
        }
        svg += "<polyline points=\"" + pts +
               "\" fill=\"none\" stroke=\"#c22\" stroke-width=\"1.5\"/>\n";
    }
    // scatter
    for (const auto& r : sr.rows) {
        if (!(r.tau_g_us > 0.0)) continue;
        svg += "<circle cx=\"" + fmt_g(px(r.tau_g_us)) + "\" cy=\"" +
               fmt_g(py(r.echo_efficiency)) + "\" r=\"3.5\" fill=\"#226\"/>\n";
    }
    svg += "</svg>\n";
    return svg;
}

inline nlohmann::json fit_json(const FitResult& fit) {
    return {{"a", fit.a}, {"b", fit.b}, {"c", fit.c}, {"r_squared", fit.r_squared}};
}

// manifest with config hash and an nz-doubling convergence indicator on a
// reduced weak probe
inline void write_manifest(const std::filesystem::path& dir, const ScenarioConfig& cfg,
                           double kappa, double max_drift) {
    double conv = 0.0;
    if (kappa > 0.0) {
        auto weights = build_weights(cfg.grids, cfg.line_mode, cfg.line_fwhm);
        const double t1 =
            probe_transmission(cfg.medium, cfg.grids, weights, kappa, nullptr, cfg.threads);
        const double t2 = probe_transmission(cfg.medium, cfg.grids, weights, kappa, nullptr,
                                             cfg.threads, 2 * cfg.grids.nz);
        conv = std::abs(t2 - t1) / t1;
    }
    char hash[20];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(fnv1a(cfg.raw_text)));
    nlohmann::json j{{"version", slowecho::version},
                     {"config_fnv1a", hash},
                     {"threads", cfg.threads},
                     {"grids", {{"nz", cfg.grids.nz},
                                {"n_delta", cfg.grids.n_delta},
                                {"delta_max", cfg.grids.delta_max},
                                {"dt_us", cfg.grids.dt_us},
                                {"nt", cfg.grids.nt}}},
                     {"nz_doubling_energy_delta", conv},
                     {"max_population_drift", max_drift}};
    write_text(dir / "manifest.json", j.dump(2) + "\n");
}

inline void write_run_artifacts(const std::filesystem::path& dir, const ScenarioConfig& cfg,
                                const RunResult& rr, const std::string& report_name) {
    std::filesystem::create_directories(dir);
    rr.record.to_csv((dir / "trace.csv").string());
    if (rr.population)
        rr.population->to_csv((dir / "population.csv").string(), cfg.medium, cfg.grids);
    write_text(dir / report_name, run_json(rr).dump(2) + "\n");
}

} // namespace detail

// Runs the configured scenario and writes its artifact set under out_dir.
// Returns the report JSON (also printed by the CLI).
inline nlohmann::json run_scenario(const ScenarioConfig& cfg, const std::string& out_dir) {
    namespace fs = std::filesystem;
    const fs::path dir(out_dir);
    fs::create_directories(dir);

    nlohmann::json report;
    double kappa = 0.0, drift = 0.0;
    switch (cfg.scenario) {
        case ScenarioKind::single_run: {
            auto rr = run_single(cfg);
            detail::write_run_artifacts(dir, cfg, rr, "report.json");
            report = detail::run_json(rr);
            kappa = rr.kappa;
            drift = rr.record.max_pop_drift;
            break;
        }
        case ScenarioKind::fig2_pair: {
            auto pr = run_fig2_pair(cfg);
            detail::write_run_artifacts(dir / "burn", cfg, pr.with_burn, "report.json");
            detail::write_run_artifacts(dir / "noburn", cfg, pr.without_burn, "report.json");
            report = {{"with_burn", detail::run_json(pr.with_burn)},
                      {"without_burn", detail::run_json(pr.without_burn)}};
            if (pr.ratio_valid) report["enhancement_ratio"] = pr.enhancement_ratio;
            detail::write_text(dir / "pair_report.json", report.dump(2) + "\n");
            kappa = pr.with_burn.kappa;
            drift = std::max(pr.with_burn.record.max_pop_drift,
                             pr.without_burn.record.max_pop_drift);
            break;
        }
        case ScenarioKind::fig3_sweep: {
            auto sr = run_fig3_sweep(cfg);
            detail::write_text(dir / "sweep.csv", detail::sweep_csv(sr));
            detail::write_text(dir / "fit.json", detail::fit_json(sr.fit).dump(2) + "\n");
            detail::write_text(dir / "sweep.svg", detail::sweep_svg(sr));
            report = {{"fit", detail::fit_json(sr.fit)},
                      {"n_points", sr.rows.size()}};
            kappa = sr.kappa;
            drift = sr.max_pop_drift;
            break;
        }
        case ScenarioKind::fig4_scan: {
            auto sr = run_fig4_scan(cfg);
            detail::write_text(dir / "scan.csv", detail::sweep_csv(sr));
            nlohmann::json rows = nlohmann::json::array();
            for (const auto& r : sr.rows)
                rows.push_back({{"t_h_us", r.t_h_us},
                                {"ng_hole_center", r.ng_hole_center},
                                {"tau_g_us", r.tau_g_us},
                                {"s_d_energy", r.s_d_energy},
                                {"echo_efficiency", r.echo_efficiency}});
            report = {{"rows", rows}};
            detail::write_text(dir / "scan_report.json", report.dump(2) + "\n");
            kappa = sr.kappa;
            drift = sr.max_pop_drift;
            break;
        }
        case ScenarioKind::backward_control: {
            auto tr = run_backward_control(cfg);
            detail::write_run_artifacts(dir / "forward", cfg, tr.forward, "report.json");
            detail::write_run_artifacts(dir / "backward", cfg, tr.backward, "report.json");
            detail::write_run_artifacts(dir / "noburn", cfg, tr.none, "report.json");
            report = {{"forward_efficiency", tr.forward.echo_efficiency},
                      {"backward_efficiency", tr.backward.echo_efficiency},
                      {"noburn_efficiency", tr.none.echo_efficiency}};
            detail::write_text(dir / "control_report.json", report.dump(2) + "\n");
            kappa = tr.forward.kappa;
            drift = std::max({tr.forward.record.max_pop_drift,
                              tr.backward.record.max_pop_drift,
                              tr.none.record.max_pop_drift});
            break;
        }
    }
    detail::write_manifest(dir, cfg, kappa, drift);
    return report;
}

} // namespace slowecho
