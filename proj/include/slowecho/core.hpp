// core.hpp - domain types, grids, spectral-line weights, pulse rendering.
//
// Unit conventions used throughout: time in us, length in mm, angular
// frequencies (detunings, Rabi) in rad/us, intensity as |Omega|^2 in
// (rad/us)^2.  Note 1 mm/us == 1 km/s, so group velocities come out in
// km/s directly.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "slowecho/errors.hpp"

namespace slowecho {

using cplx = std::complex<double>;

inline constexpr double speed_of_light_km_s = 2.99792458e5;

struct MediumSpec {
    double length_mm = 5.0;
    double optical_depth_d0 = 2.2;
    double t1_opt_us = 160.0;        // excited-state lifetime
    double t2_opt_us = 12.0;         // effective coherence time at ~5 K
    double shelf_branch_b = 0.5;     // excited-state branching into the shelf
    double shelf_lifetime_us = 1e9;
    double repump_rate_per_us = 0.0; // prep-phase bookkeeping; the coherent
                                     // window has C1/C2 gated off

    void validate() const {
        if (length_mm <= 0.0)
            throw config_error("medium.length_mm must be > 0");
        if (optical_depth_d0 < 0.0)
            throw config_error("medium.optical_depth_d0 must be >= 0");
        if (t1_opt_us <= 0.0 || t2_opt_us <= 0.0)
            throw config_error("medium lifetimes must be > 0");
        if (t2_opt_us > 2.0 * t1_opt_us + 1e-12)
            throw config_error("medium.t2_opt_us must not exceed 2*t1_opt_us");
        if (shelf_branch_b < 0.0 || shelf_branch_b > 1.0)
            throw config_error("medium.shelf_branch_b must be in [0,1]");
        if (shelf_lifetime_us <= 0.0)
            throw config_error("medium.shelf_lifetime_us must be > 0");
        if (repump_rate_per_us < 0.0)
            throw config_error("medium.repump_rate_per_us must be >= 0");
    }
};

enum class PulseLabel { h, d, r, custom };
enum class PulseShape { square, gaussian };

inline const char* to_string(PulseLabel l) {
    switch (l) {
        case PulseLabel::h: return "h";
        case PulseLabel::d: return "d";
        case PulseLabel::r: return "r";
        default: return "custom";
    }
}

// Complex envelope pulse.  For `square` the envelope is rabi_peak on
// [t_start, t_start + duration).  For `gaussian` duration is the field
// FWHM, centered at t_start + duration/2, truncated at +-2*duration
// around the center (amplitude ~2e-5 at the cut).
struct Pulse {
    PulseLabel label = PulseLabel::custom;
    double t_start_us = 0.0;
    double duration_us = 1.0;
    double rabi_peak = 0.0;     // rad/us
    double detuning = 0.0;      // rad/us, envelope rotation exp(+i*det*(t-tc))
    PulseShape shape = PulseShape::square;

    static constexpr double gaussian_support_fwhm = 2.0;

    double t_center() const { return t_start_us + 0.5 * duration_us; }

    double t_render_lo() const {
        return shape == PulseShape::square
                   ? t_start_us
                   : t_center() - gaussian_support_fwhm * duration_us;
    }
    double t_render_hi() const {
        return shape == PulseShape::square
                   ? t_start_us + duration_us
                   : t_center() + gaussian_support_fwhm * duration_us;
    }

    // Integral of the field envelope (pulse area for detuning = 0).
    double area() const {
        if (shape == PulseShape::square) return rabi_peak * duration_us;
        return rabi_peak * duration_us * std::sqrt(std::numbers::pi / (4.0 * std::numbers::ln2));
    }

    // Peak Rabi frequency that realizes a given area with this shape/duration.
    static double rabi_for_area(double area, double duration_us, PulseShape shape) {
        if (shape == PulseShape::square) return area / duration_us;
        return area / (duration_us * std::sqrt(std::numbers::pi / (4.0 * std::numbers::ln2)));
    }

    cplx envelope_at(double t) const {
        double a = 0.0;
        if (shape == PulseShape::square) {
            if (t >= t_start_us && t < t_start_us + duration_us) a = rabi_peak;
        } else {
            const double tc = t_center();
            if (std::abs(t - tc) <= gaussian_support_fwhm * duration_us) {
                const double x = (t - tc) / duration_us;
                a = rabi_peak * std::exp(-4.0 * std::numbers::ln2 * x * x);
            }
        }
        if (a == 0.0) return {0.0, 0.0};
        if (detuning == 0.0) return {a, 0.0};
        const double ph = detuning * (t - t_center());
        return cplx{a * std::cos(ph), a * std::sin(ph)};
    }
};

struct PulseSequence {
    std::vector<Pulse> pulses;
    double t_end_us = 30.0;

    const Pulse* find(PulseLabel l) const {
        for (const auto& p : pulses)
            if (p.label == l) return &p;
        return nullptr;
    }
};

// Discretization of (z, detuning, time).  Detuning grid spans
// [-delta_max, +delta_max] with n_delta points; n_delta odd keeps
// Delta = 0 a grid point.  Time nodes are t_i = i * dt, i = 0..nt-1.
struct Grids {
    int nz = 128;
    int n_delta = 301;
    double delta_max = 25.0;  // rad/us
    double dt_us = 0.002;
    int nt = 15001;

    void validate() const {
        if (nz < 32) throw config_error("grids.nz must be >= 32");
        if (n_delta < 3) throw config_error("grids.n_delta must be >= 3");
        if (n_delta % 2 == 0) throw config_error("grids.n_delta must be odd");
        if (delta_max <= 0.0) throw config_error("grids.delta_max must be > 0");
        if (dt_us <= 0.0) throw config_error("grids.dt_us must be > 0");
        if (nt < 2) throw config_error("grids.nt must be >= 2");
        if (dt_us * delta_max > 0.1 + 1e-12)
            throw config_error("grids: dt_us * delta_max exceeds the 0.1 phase-rotation bound");
    }

    double delta_step() const { return 2.0 * delta_max / (n_delta - 1); }
    double t_end() const { return (nt - 1) * dt_us; }

    std::vector<double> deltas() const {
        std::vector<double> d(n_delta);
        const double step = delta_step();
        for (int i = 0; i < n_delta; ++i) d[i] = -delta_max + step * i;
        d[n_delta / 2] = 0.0;  // exact center
        return d;
    }

    std::vector<double> times() const {
        std::vector<double> t(nt);
        for (int i = 0; i < nt; ++i) t[i] = i * dt_us;
        return t;
    }

    static Grids with_horizon(Grids g, double t_end_us) {
        g.nt = static_cast<int>(std::ceil(t_end_us / g.dt_us - 1e-9)) + 1;
        return g;
    }
};

struct SpectralWeights {
    std::vector<double> deltas;
    std::vector<double> weights;

    int size() const { return static_cast<int>(weights.size()); }
    int center_index() const { return size() / 2; }

    // weight density (per rad/us) at line center, for coupling estimates
    double center_density(double delta_step) const {
        return weights[center_index()] / delta_step;
    }
};

enum class LineMode { flat, gaussian };

// Discretizes the inhomogeneous line over the spectral window.  `flat`
// is the default (the window is far narrower than the real line, see
// the medium's optical_depth for the total coupling); `gaussian` exists
// for sensitivity checks and takes the line FWHM in rad/us.
inline SpectralWeights build_weights(const Grids& grids, LineMode mode, double fwhm = 0.0) {
    if (grids.n_delta < 3) throw config_error("build_weights: n_delta must be >= 3");
    if (grids.delta_max <= 0.0) throw config_error("build_weights: delta_max must be > 0");
    if (grids.n_delta % 2 == 0) throw config_error("build_weights: n_delta must be odd");

    SpectralWeights w;
    w.deltas = grids.deltas();
    w.weights.assign(grids.n_delta, 0.0);

    if (mode == LineMode::flat) {
        const double u = 1.0 / grids.n_delta;
        std::fill(w.weights.begin(), w.weights.end(), u);
        return w;
    }

    if (fwhm <= 0.0) throw config_error("build_weights: gaussian mode needs fwhm > 0");
    double sum = 0.0;
    for (int i = 0; i < grids.n_delta; ++i) {
        const double x = w.deltas[i] / fwhm;
        w.weights[i] = std::exp(-4.0 * std::numbers::ln2 * x * x);
        sum += w.weights[i];
    }
    for (auto& v : w.weights) v /= sum;
    return w;
}

// Checks time ordering, overlap and resolvability of a sequence on the
// given grids; returns the (sorted) sequence or throws config_error.
// Pulses in the coherent window must be pairwise disjoint and each
// duration must span at least 10 time steps.
inline PulseSequence validate_sequence(PulseSequence seq, const Grids& grids) {
    std::stable_sort(seq.pulses.begin(), seq.pulses.end(),
                     [](const Pulse& a, const Pulse& b) { return a.t_start_us < b.t_start_us; });

    for (const auto& p : seq.pulses) {
        if (p.duration_us <= 0.0)
            throw config_error("pulse duration must be > 0");
        if (p.duration_us < 10.0 * grids.dt_us)
            throw config_error(std::string("pulse '") + to_string(p.label) +
                               "' is unresolvable: duration < 10*dt");
        if (grids.dt_us * (std::abs(p.detuning) + p.rabi_peak) > 0.1 + 1e-12)
            throw config_error(std::string("pulse '") + to_string(p.label) +
                               "' violates the dt*(|detuning|+rabi) <= 0.1 bound");
        if (p.t_render_hi() > seq.t_end_us + 1e-9)
            throw config_error(std::string("pulse '") + to_string(p.label) +
                               "' extends past the simulation horizon");
    }
    for (size_t i = 0; i + 1 < seq.pulses.size(); ++i) {
        const Pulse& a = seq.pulses[i];
        const Pulse& b = seq.pulses[i + 1];
        if (a.t_start_us + a.duration_us > b.t_start_us + 1e-12)
            throw config_error(std::string("pulses '") + to_string(a.label) + "' and '" +
                               to_string(b.label) + "' overlap");
    }

    const Pulse* d = seq.find(PulseLabel::d);
    const Pulse* r = seq.find(PulseLabel::r);
    if (d && r) {
        const double t_echo = 2.0 * r->t_center() - d->t_center();
        if (seq.t_end_us < t_echo + d->duration_us)
            throw config_error("t_end_us must exceed the expected echo time 2*t_R - t_D "
                               "by at least one data-pulse duration");
    }
    return seq;
}

// Sum of all pulse envelopes on the time grid.
inline std::vector<cplx> render_sequence(const PulseSequence& seq, const Grids& grids) {
    std::vector<cplx> field(grids.nt, cplx{0.0, 0.0});
    for (const auto& p : seq.pulses) {
        const int i_lo = std::max(0, static_cast<int>(std::floor(p.t_render_lo() / grids.dt_us)));
        const int i_hi = std::min(grids.nt - 1,
                                  static_cast<int>(std::ceil(p.t_render_hi() / grids.dt_us)));
        for (int i = i_lo; i <= i_hi; ++i) field[i] += p.envelope_at(i * grids.dt_us);
    }
    return field;
}

} // namespace slowecho
