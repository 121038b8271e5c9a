// analysis.hpp - observables extracted from field records: optical depth,
// group delay/velocity, slow factor, echo detection and the exponential
// echo-vs-delay fit.
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "slowecho/core.hpp"
#include "slowecho/errors.hpp"
#include "slowecho/propagation.hpp"

namespace slowecho {

struct TimeWindow {
    double lo = 0.0;
    double hi = 0.0;
    double width() const { return hi - lo; }
    bool overlaps(const TimeWindow& o) const { return lo < o.hi && o.lo < hi; }
};

struct EchoEvent {
    double t_center_us = 0.0;
    TimeWindow window;
    double energy = 0.0;      // intensity-time units
    double efficiency = 0.0;  // energy / input data-pulse energy
};

struct FitResult {
    double a = 0.0;          // amplitude
    double b = 0.0;          // rate (1/us)
    double c = 0.0;          // delay offset (us)
    double r_squared = 0.0;  // of the log-linear regression
};

namespace detail {

inline double centroid(std::span<const cplx> trace, double dt, const TimeWindow& w) {
    const int n = static_cast<int>(trace.size());
    const int i0 = std::max(0, static_cast<int>(std::ceil(w.lo / dt - 1e-9)));
    const int i1 = std::min(n - 1, static_cast<int>(std::floor(w.hi / dt + 1e-9)));
    double num = 0.0, den = 0.0;
    for (int i = i0; i <= i1; ++i) {
        const double p = std::norm(trace[i]);
        num += p * (i * dt);
        den += p;
    }
    if (den <= 0.0) throw analysis_error("centroid: no signal energy in window");
    return num / den;
}

} // namespace detail

// d = -ln(E_out / E_in) over the window.
inline double optical_depth(const FieldRecord& rec, const TimeWindow& window) {
    const double e_in = trace_energy(rec.omega_in, rec.dt(), window.lo, window.hi);
    if (e_in <= 0.0) throw analysis_error("optical_depth: zero input energy in window");
    const double e_out = trace_energy(rec.omega_out, rec.dt(), window.lo, window.hi);
    return -std::log(e_out / e_in);
}

// Intensity-centroid delay of the transmitted pulse relative to the input.
// The output window is the input window stretched by four pulse durations
// to catch the delayed pulse; `widen_cap` bounds the stretch so that a
// following pulse in the same record is not swallowed.  The quiet floor
// used for the detectability check excludes `signal_windows` (other pulses
// and echoes present in the record).
inline double group_delay(const FieldRecord& rec, const TimeWindow& pulse_window,
                          double widen_cap = std::numeric_limits<double>::infinity(),
                          std::span<const TimeWindow> signal_windows = {}) {
    const double dt = rec.dt();
    TimeWindow widened{pulse_window.lo,
                       std::min({pulse_window.hi + 4.0 * pulse_window.width(), rec.t_end(),
                                 widen_cap})};

    // detectability: output peak in the widened window against the quiet floor
    const int n = static_cast<int>(rec.omega_out.size());
    double peak = 0.0, floor_sq = 0.0;
    int n_floor = 0;
    for (int i = 0; i < n; ++i) {
        const double t = i * dt;
        const double p = std::norm(rec.omega_out[i]);
        if (t >= widened.lo && t <= widened.hi) {
            peak = std::max(peak, p);
            continue;
        }
        bool masked = false;
        for (const auto& w : signal_windows)
            if (t >= w.lo && t <= w.hi) masked = true;
        if (!masked) {
            floor_sq += p * p;
            ++n_floor;
        }
    }
    const double floor_rms = n_floor > 0 ? std::sqrt(floor_sq / n_floor) : 0.0;
    if (peak <= 0.0 || peak <= 5.0 * floor_rms)
        throw analysis_error("group_delay: no detectable output pulse in window");

    return detail::centroid(rec.omega_out, dt, widened) -
           detail::centroid(rec.omega_in, dt, pulse_window);
}

inline double group_velocity(double tau_g_us, const MediumSpec& medium) {
    if (tau_g_us <= 0.0) throw analysis_error("group_velocity: nonpositive delay");
    return medium.length_mm / tau_g_us;  // mm/us == km/s
}

inline double slow_factor(double v_g_km_s) {
    if (v_g_km_s <= 0.0) throw analysis_error("slow_factor: nonpositive group velocity");
    return speed_of_light_km_s / v_g_km_s;
}

// Centroid group delay of the transmitted data pulse within a full pulse
// sequence: the delay search window is capped at the next pulse so the
// rephasing pulse is not swallowed.  Returns 0 when no transmitted data
// pulse is detectable.
inline double measure_data_delay(const FieldRecord& rec, const PulseSequence& seq) {
    const Pulse* d = seq.find(PulseLabel::d);
    if (!d) throw analysis_error("measure_data_delay: sequence has no data pulse");
    double cap = std::numeric_limits<double>::infinity();
    std::vector<TimeWindow> signal;
    for (const auto& p : seq.pulses) {
        if (p.t_render_lo() > d->t_center()) cap = std::min(cap, p.t_render_lo());
        // mask pulse transmissions, slow-light tails and echo recursions
        // out of the quiet floor
        const double guard = 4.0 * p.duration_us;
        signal.push_back({p.t_render_lo() - guard, p.t_render_hi() + guard});
        if (p.label == PulseLabel::r && p.t_center() > d->t_center()) {
            const double spacing = p.t_center() - d->t_center();
            for (int k = 1; k <= 3; ++k) {
                const double c = p.t_center() + k * spacing;
                signal.push_back({c - 0.5 * spacing, c + 0.5 * spacing});
            }
        }
    }
    const TimeWindow d_window{std::max(0.0, d->t_render_lo()), d->t_render_hi()};
    try {
        return std::max(0.0, group_delay(rec, d_window, cap, signal));
    } catch (const analysis_error&) {
        return 0.0;
    }
}

// Echo search in windows centered at t_R + k*(t_R - t_D), k = 1..3 (pulse
// centers).  Window width is 2*max pulse duration + 2*measured group delay;
// trailing windows that do not fit inside the horizon are skipped.  Windows
// that collide with an input pulse are measured on the difference to the
// kappa = 0 reference (which is identically the input trace), so the
// reported energy is the medium response alone.  Windows below 1e-6 of the
// input data-pulse energy are omitted.
inline std::vector<EchoEvent> detect_echoes(const FieldRecord& rec, const PulseSequence& seq) {
    const Pulse* d = seq.find(PulseLabel::d);
    if (!d) throw analysis_error("detect_echoes: sequence has no data pulse");
    const Pulse* r = seq.find(PulseLabel::r);
    if (!r) return {};

    const double dt = rec.dt();
    const double tau_g = measure_data_delay(rec, seq);
    const TimeWindow d_window{std::max(0.0, d->t_render_lo()), d->t_render_hi()};
    const double e_d_in = trace_energy(rec.omega_in, dt, d_window.lo, d_window.hi);
    if (e_d_in <= 0.0) throw analysis_error("detect_echoes: no input data-pulse energy");

    double max_dur = 0.0;
    for (const auto& p : seq.pulses) max_dur = std::max(max_dur, p.duration_us);
    const double width = 2.0 * max_dur + 2.0 * tau_g;

    std::vector<EchoEvent> events;
    const double t_d = d->t_center(), t_r = r->t_center();
    for (int k = 1; k <= 3; ++k) {
        const double center = t_r + k * (t_r - t_d);
        TimeWindow w{center - 0.5 * width, center + 0.5 * width};
        if (w.hi > rec.t_end() + 1e-9) break;
        w.lo = std::max(w.lo, 0.0);

        bool collides = false;
        for (const auto& p : seq.pulses)
            if (w.overlaps({p.t_render_lo(), p.t_render_hi()})) collides = true;

        const int i0 = std::max(0, static_cast<int>(std::ceil(w.lo / dt - 1e-9)));
        const int i1 = std::min(static_cast<int>(rec.omega_out.size()) - 1,
                                static_cast<int>(std::floor(w.hi / dt + 1e-9)));
        double energy = 0.0, num = 0.0;
        for (int i = i0; i <= i1; ++i) {
            const cplx v = collides ? rec.omega_out[i] - rec.omega_in[i] : rec.omega_out[i];
            const double p = std::norm(v);
            energy += p;
            num += p * (i * dt);
        }
        const double t_centroid = energy > 0.0 ? num / energy : center;
        energy *= dt;
        if (energy < 1e-6 * e_d_in) continue;
        events.push_back({t_centroid, w, energy, energy / e_d_in});
    }
    return events;
}

struct FitCMode {
    bool use_min_tau = true;
    double c = 0.0;
    static FitCMode fixed(double c) { return {false, c}; }
    static FitCMode min_tau() { return {true, 0.0}; }
};

// Log-linear least squares for y = A*exp(B*(tau - C)).  A and C are jointly
// unidentifiable, so C is a convention (fixed or min tau), never fitted.
inline FitResult fit_exponential(const std::vector<std::pair<double, double>>& points,
                                 FitCMode c_mode = FitCMode::min_tau()) {
    if (points.size() < 3)
        throw analysis_error("fit_exponential: need at least 3 points");
    for (const auto& [tau, y] : points)
        if (y <= 0.0) throw analysis_error("fit_exponential: nonpositive intensity");

    const double n = static_cast<double>(points.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, min_tau = points[0].first;
    for (const auto& [tau, y] : points) {
        const double ly = std::log(y);
        sx += tau;
        sy += ly;
        sxx += tau * tau;
        sxy += tau * ly;
        min_tau = std::min(min_tau, tau);
    }
    const double det = n * sxx - sx * sx;
    if (std::abs(det) < 1e-14 * std::max(1.0, sxx * n))
        throw analysis_error("fit_exponential: degenerate abscissae");
    const double slope = (n * sxy - sx * sy) / det;
    const double intercept = (sy - slope * sx) / n;

    double ss_res = 0.0, ss_tot = 0.0;
    const double mean_ly = sy / n;
    for (const auto& [tau, y] : points) {
        const double ly = std::log(y);
        const double fit = intercept + slope * tau;
        ss_res += (ly - fit) * (ly - fit);
        ss_tot += (ly - mean_ly) * (ly - mean_ly);
    }

    FitResult out;
    out.b = slope;
    out.c = c_mode.use_min_tau ? min_tau : c_mode.c;
    out.a = std::exp(intercept + slope * out.c);
    out.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    return out;
}

} // namespace slowecho
