// burn.hpp - millisecond-scale preparation phase reduced to closed-form
// population maps over (z, detuning): spectral hole shape per z slice with
// saturable-Beer attenuation of the burn intensity along z, plus a
// Kramers-Kronig group-delay predictor used as an independent cross-check.
#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "slowecho/core.hpp"
#include "slowecho/errors.hpp"

namespace slowecho {

enum class BurnModel { rate_saturation, damped_rabi };
enum class BurnDirection { forward, backward };

struct BurnConfig {
    BurnModel model = BurnModel::rate_saturation;
    double hole_hwhm = 0.42;        // rad/us
    Pulse h_pulse;                  // label H, resonant
    double wait_after_h_us = 500.0;
    bool repump_on = true;          // prep starts from the repumped ground state
    BurnDirection direction = BurnDirection::forward;
    double t_damp_us = 50.0;        // Rabi damping time for the damped_rabi model
    std::optional<double> i_sat;    // override; default 1/(t1*t2) in Rabi^2 units
    bool allow_short_wait = false;
};

// Ground/shelf/excited populations over (z, detuning), row-major in z.
// z grid is z_k = k * length/nz, k = 0..nz-1 (entrance inclusive).
struct PopulationMap {
    int nz = 0;
    int n_delta = 0;
    std::vector<double> n_g, n_s, n_e;

    PopulationMap() = default;
    PopulationMap(int nz_, int nd_)
        : nz(nz_), n_delta(nd_),
          n_g(static_cast<size_t>(nz_) * nd_, 1.0),
          n_s(static_cast<size_t>(nz_) * nd_, 0.0),
          n_e(static_cast<size_t>(nz_) * nd_, 0.0) {}

    size_t idx(int iz, int id) const { return static_cast<size_t>(iz) * n_delta + id; }
    double ng(int iz, int id) const { return n_g[idx(iz, id)]; }
    double ns(int iz, int id) const { return n_s[idx(iz, id)]; }
    double ne(int iz, int id) const { return n_e[idx(iz, id)]; }

    // CSV export: z_mm, delta_rad_per_us, n_g, n_s (row-major z then delta)
    void to_csv(const std::string& path, const MediumSpec& medium, const Grids& grids) const {
        std::ofstream out(path);
        if (!out) throw config_error("cannot open " + path + " for writing");
        out << "z_mm,delta_rad_per_us,n_g,n_s\n";
        const double dz = medium.length_mm / grids.nz;
        const auto deltas = grids.deltas();
        char buf[160];
        for (int iz = 0; iz < nz; ++iz)
            for (int id = 0; id < n_delta; ++id) {
                std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g,%.12g\n", iz * dz,
                              deltas[id], ng(iz, id), ns(iz, id));
                out << buf;
            }
    }
};

namespace detail {

// Saturable Beer attenuation dI/dz = -alpha0 * I / (1 + I/I_sat), solved with
// RK4 on the node grid z_k = k*dz; returns I at each node.
inline std::vector<double> attenuate_burn_intensity(double i0, double alpha0, double i_sat,
                                                    int nz, double dz) {
    std::vector<double> intensity(nz);
    auto rhs = [&](double i_val) { return -alpha0 * i_val / (1.0 + i_val / i_sat); };
    double cur = i0;
    const int substeps = 4;
    const double h = dz / substeps;
    for (int k = 0; k < nz; ++k) {
        intensity[k] = cur;
        for (int s = 0; s < substeps; ++s) {
            const double k1 = rhs(cur);
            const double k2 = rhs(cur + 0.5 * h * k1);
            const double k3 = rhs(cur + 0.5 * h * k2);
            const double k4 = rhs(cur + h * k3);
            cur += h / 6.0 * (k1 + 2.0 * (k2 + k3) + k4);
            if (cur < 0.0) cur = 0.0;
        }
    }
    return intensity;
}

} // namespace detail

// Produces the post-preparation population map.  Hole depth per slice:
//   rate_saturation: depth = s/(1+s), s = I_H(z)/I_sat
//   damped_rabi:     depth = (1 - cos(Omega_H(z)*T_H) * exp(-T_H/T_damp)) / 2
// applied with a Lorentzian spectral profile of HWHM hole_hwhm; removed
// ground population sits in the shelf, the excited state is empty after
// the post-burn wait.
inline PopulationMap burn(const MediumSpec& medium, const Grids& grids,
                          const SpectralWeights& weights, const BurnConfig& cfg) {
    medium.validate();
    grids.validate();
    (void)weights;  // line weights multiply out of the per-class population fractions
    if (cfg.h_pulse.detuning != 0.0)
        throw config_error("burn: H pulse must be resonant (detuning 0)");
    if (cfg.hole_hwhm <= 0.0 || cfg.hole_hwhm >= grids.delta_max / 4.0)
        throw config_error("burn: hole_hwhm must lie in (0, delta_max/4)");
    if (cfg.wait_after_h_us < 0.0)
        throw config_error("burn: wait_after_h_us must be >= 0");
    if (cfg.wait_after_h_us < 3.0 * medium.t1_opt_us && !cfg.allow_short_wait)
        throw config_error("burn: wait_after_h_us < 3*t1_opt_us leaves excited-state "
                           "population unaccounted for (set allow_short_wait to override)");
    if (cfg.t_damp_us <= 0.0)
        throw config_error("burn: t_damp_us must be > 0");

    PopulationMap map(grids.nz, grids.n_delta);
    const double i0 = cfg.h_pulse.rabi_peak * cfg.h_pulse.rabi_peak;
    if (i0 == 0.0) return map;  // no burn

    const double i_sat =
        cfg.i_sat ? *cfg.i_sat : 1.0 / (medium.t1_opt_us * medium.t2_opt_us);
    if (i_sat <= 0.0) throw config_error("burn: i_sat must be > 0");
    const double alpha0 = medium.optical_depth_d0 / medium.length_mm;
    const double dz = medium.length_mm / grids.nz;
    const auto intensity =
        detail::attenuate_burn_intensity(i0, alpha0, i_sat, grids.nz, dz);

    std::vector<double> depth(grids.nz);
    const double t_h = cfg.h_pulse.duration_us;
    for (int k = 0; k < grids.nz; ++k) {
        if (cfg.model == BurnModel::rate_saturation) {
            const double s = intensity[k] / i_sat;
            depth[k] = s / (1.0 + s);
        } else {
            const double omega_h = std::sqrt(intensity[k]);
            depth[k] =
                0.5 * (1.0 - std::cos(omega_h * t_h) * std::exp(-t_h / cfg.t_damp_us));
        }
    }
    if (cfg.direction == BurnDirection::backward)
        std::reverse(depth.begin(), depth.end());

    const auto deltas = grids.deltas();
    const double g2h = cfg.hole_hwhm * cfg.hole_hwhm;
    for (int k = 0; k < grids.nz; ++k)
        for (int id = 0; id < grids.n_delta; ++id) {
            const double lor = g2h / (g2h + deltas[id] * deltas[id]);
            const double removed = depth[k] * lor;
            map.n_g[map.idx(k, id)] = 1.0 - removed;
            map.n_s[map.idx(k, id)] = removed;
        }
    return map;
}

// Narrow-Lorentzian-hole closed form tau_g = delta_alpha*l / (2*gamma_h),
// the cross-check for the numeric predictor below.
inline double lorentzian_hole_group_delay(double delta_alpha_l, double gamma_h) {
    return delta_alpha_l / (2.0 * gamma_h);
}

// Kramers-Kronig group delay of a weak resonant pulse through the burned
// medium: the population-weighted absorption profile (normalized so the
// unburned line center realizes optical_depth_d0 over the full length) is
// Hilbert-transformed via a principal-value integral with singularity
// subtraction, and the dispersion phase is differenced at +-delta_step/2
// around line center.  The unburned-line absorption is subtracted first:
// the true inhomogeneous line is orders of magnitude wider than the
// sampled window, so the window-edge dispersion of the flat background is
// a discretization artifact, not physics.  hole_hwhm is accepted for
// interface symmetry with the analytic cross-check; the numeric route
// does not need it.
inline double predicted_group_delay(const PopulationMap& map, const MediumSpec& medium,
                                    const SpectralWeights& weights,
                                    double /*hole_hwhm*/ = 0.0) {
    if (map.n_delta != weights.size() || map.nz <= 0)
        throw config_error("predicted_group_delay: map/weights shape mismatch");
    const int n = map.n_delta;
    const int c = n / 2;

    // z-averaged ground population per detuning
    std::vector<double> ng_avg(n, 0.0);
    for (int iz = 0; iz < map.nz; ++iz)
        for (int id = 0; id < n; ++id) ng_avg[id] += map.ng(iz, id);
    for (auto& v : ng_avg) v /= map.nz;

    double ng_max = ng_avg[0];
    for (double v : ng_avg) ng_max = std::max(ng_max, v);
    const double dip = ng_max - ng_avg[c];
    if (dip == 0.0) return 0.0;
    if (dip < 1e-6) throw analysis_error("predicted_group_delay: no spectral hole at line center");

    // hole absorption contrast alpha(nu)*l relative to the unburned line,
    // sampled on the envelope-frequency grid nu_j = deltas[j]; a class at
    // detuning Delta resonates with envelope frequency -Delta.
    const double w_c = weights.weights[c];
    std::vector<double> alpha_l(n);
    for (int j = 0; j < n; ++j) {
        const int id = n - 1 - j;
        alpha_l[j] = medium.optical_depth_d0 * weights.weights[id] * (ng_avg[id] - 1.0) / w_c;
    }

    const auto& nu = weights.deltas;
    const double step = nu[1] - nu[0];
    auto interp_alpha = [&](double x) {
        const double pos = (x - nu[0]) / step;
        int j = static_cast<int>(std::floor(pos));
        j = std::max(0, std::min(n - 2, j));
        const double f = pos - j;
        return alpha_l[j] * (1.0 - f) + alpha_l[j + 1] * f;
    };
    // dispersion phase at exit, via PV integral with singularity subtraction
    auto phase = [&](double om) {
        const double a_om = interp_alpha(om);
        double integral = 0.0;
        for (int j = 0; j < n; ++j) {
            const double reg = (alpha_l[j] - a_om) / (om - nu[j]);
            integral += (j == 0 || j == n - 1) ? 0.5 * reg : reg;
        }
        integral *= step;
        integral += a_om * std::log(std::abs((om - nu[0]) / (nu[n - 1] - om)));
        return -integral / (2.0 * std::numbers::pi);
    };

    const double h = 0.5 * step;
    return (phase(h) - phase(-h)) / (2.0 * h);
}

} // namespace slowecho
