// propagation.hpp - reduced Maxwell equation in the retarded frame,
// z-marched over Bloch slices with a midpoint predictor-corrector:
//   dOmega/dz = i * kappa * P(z, t),  P = sum_Delta w(Delta) * sigma(Delta)
// kappa is calibrated so a weak probe through the unburned line transmits
// exp(-optical_depth_d0) in energy.
#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numbers>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "slowecho/bloch.hpp"
#include "slowecho/burn.hpp"
#include "slowecho/core.hpp"
#include "slowecho/errors.hpp"

namespace slowecho {

struct CouplingConstant {
    double kappa = 0.0;  // rad/us per mm per unit coherence
};

struct FieldRecord {
    std::vector<double> t_grid;
    std::vector<cplx> omega_in;
    std::vector<cplx> omega_out;
    std::vector<std::pair<int, std::vector<cplx>>> probes;  // (z index, trace)
    double max_pop_drift = 0.0;

    double dt() const { return t_grid.size() > 1 ? t_grid[1] - t_grid[0] : 0.0; }
    double t_end() const { return t_grid.empty() ? 0.0 : t_grid.back(); }

    // CSV export: t_us, re_in, im_in, re_out, im_out, intensity_in, intensity_out
    void to_csv(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw config_error("cannot open " + path + " for writing");
        out << "t_us,re_in,im_in,re_out,im_out,intensity_in,intensity_out\n";
        char buf[240];
        for (size_t i = 0; i < t_grid.size(); ++i) {
            const cplx a = omega_in[i], b = omega_out[i];
            std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n",
                          t_grid[i], a.real(), a.imag(), b.real(), b.imag(), std::norm(a),
                          std::norm(b));
            out << buf;
        }
    }
};

// Energy (intensity-time integral) of a trace over [t_lo, t_hi]; rectangle
// rule on the node grid, summed in ascending time order.
inline double trace_energy(std::span<const cplx> trace, double dt, double t_lo, double t_hi) {
    const int n = static_cast<int>(trace.size());
    int i0 = std::max(0, static_cast<int>(std::ceil(t_lo / dt - 1e-9)));
    int i1 = std::min(n - 1, static_cast<int>(std::floor(t_hi / dt + 1e-9)));
    double e = 0.0;
    for (int i = i0; i <= i1; ++i) e += std::norm(trace[i]);
    return e * dt;
}

inline double trace_energy(std::span<const cplx> trace, double dt) {
    return trace_energy(trace, dt, 0.0, dt * (static_cast<double>(trace.size()) - 1.0));
}

namespace detail {

inline int default_threads() {
    const unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(std::min(8u, std::max(1u, hw)));
}

// Integrates every frequency class of `slice` across the whole time grid
// under the drive `field` (nt nodes), accumulating the weighted coherence
// sum P(t).  Classes are partitioned into a fixed number of index blocks;
// each block integrates independently and partial sums are combined in
// ascending block order, so results do not depend on the thread count.
inline void integrate_slice(SliceState& slice, std::span<const cplx> field, double dt,
                            const BlochRates& rates, const SpectralWeights& weights,
                            std::span<const double> deltas, std::span<cplx> pol_out,
                            int n_threads, StepStats* stats) {
    const int n = slice.size();
    const int nt = static_cast<int>(field.size());
    // fixed partial-sum layout (reproducible for any worker count); chunks are
    // multiples of 8 doubles so parallel workers do not share cache lines
    int chunk = (n + 15) / 16;
    chunk = ((chunk + 7) / 8) * 8;
    const int n_blocks = (n + chunk - 1) / chunk;

    std::vector<std::vector<cplx>> partial(n_blocks);
    std::vector<StepStats> block_stats(n_blocks);
    std::vector<std::exception_ptr> block_err(n_blocks);

    auto run_block = [&](int b) {
        const int i_lo = b * chunk;
        const int i_hi = std::min(n, i_lo + chunk);
        auto& pol = partial[b];
        pol.assign(nt, cplx{0.0, 0.0});
        try {
            double re = 0.0, im = 0.0;
            for (int i = i_lo; i < i_hi; ++i) {
                re += weights.weights[i] * slice.sig_re[i];
                im += weights.weights[i] * slice.sig_im[i];
            }
            pol[0] = cplx{re, im};
            for (int j = 0; j + 1 < nt; ++j) {
                const cplx o0 = field[j];
                const cplx o1 = field[j + 1];
                const cplx om = 0.5 * (o0 + o1);
                try {
                    step_rk4_range(slice, i_lo, i_hi, o0, om, o1, dt, rates, deltas,
                                   &block_stats[b]);
                } catch (const numeric_error& e) {
                    throw numeric_error(std::string(e.what()) + " at t = " +
                                        std::to_string((j + 1) * dt) + " us");
                }
                re = 0.0;
                im = 0.0;
                for (int i = i_lo; i < i_hi; ++i) {
                    re += weights.weights[i] * slice.sig_re[i];
                    im += weights.weights[i] * slice.sig_im[i];
                }
                pol[j + 1] = cplx{re, im};
            }
        } catch (...) {
            block_err[b] = std::current_exception();
        }
    };

    const int workers = std::max(1, std::min(n_threads, n_blocks));
    if (workers == 1) {
        for (int b = 0; b < n_blocks; ++b) run_block(b);
    } else {
        // contiguous block ranges per worker keep each thread on its own
        // stretch of the slice arrays
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) {
            const int b_lo = w * n_blocks / workers;
            const int b_hi = (w + 1) * n_blocks / workers;
            pool.emplace_back([&, b_lo, b_hi] {
                for (int b = b_lo; b < b_hi; ++b) run_block(b);
            });
        }
        for (auto& th : pool) th.join();
    }
    for (int b = 0; b < n_blocks; ++b)
        if (block_err[b]) std::rethrow_exception(block_err[b]);

    for (int j = 0; j < nt; ++j) {
        cplx acc{0.0, 0.0};
        for (int b = 0; b < n_blocks; ++b) acc += partial[b][j];
        pol_out[j] = acc;
    }
    if (stats)
        for (int b = 0; b < n_blocks; ++b)
            stats->max_drift = std::max(stats->max_drift, block_stats[b].max_drift);
}

inline SliceState slice_from_population(const PopulationMap* pop, int iz, int n_delta) {
    SliceState s(n_delta, iz);
    if (pop) {
        for (int i = 0; i < n_delta; ++i) {
            s.n_g[i] = pop->ng(iz, i);
            s.n_e[i] = pop->ne(iz, i);
            s.n_s[i] = pop->ns(iz, i);
        }
    }
    return s;
}

} // namespace detail

struct MarchOptions {
    std::vector<int> probe_z;  // z indices in 0..nz (0 = input plane, nz = output)
    int threads = 0;           // 0 = hardware default
};

// Z-march of the input envelope through the medium.  pop0 = nullptr means
// a fresh, unburned medium (n_g = 1 everywhere).
inline FieldRecord march(std::span<const cplx> omega_in, const MediumSpec& medium,
                         const Grids& grids, const SpectralWeights& weights,
                         const PopulationMap* pop0, CouplingConstant coupling,
                         const MarchOptions& opts = {}) {
    medium.validate();
    grids.validate();
    if (static_cast<int>(omega_in.size()) != grids.nt)
        throw config_error("march: omega_in length does not match grids.nt");
    if (weights.size() != grids.n_delta)
        throw config_error("march: weights do not match grids.n_delta");
    if (pop0 && (pop0->nz != grids.nz || pop0->n_delta != grids.n_delta))
        throw config_error("march: population map does not match grids");

    FieldRecord rec;
    rec.t_grid = grids.times();
    rec.omega_in.assign(omega_in.begin(), omega_in.end());

    auto want_probe = [&](int k) {
        for (int p : opts.probe_z)
            if (p == k) return true;
        return false;
    };

    if (coupling.kappa == 0.0) {  // transparent medium, bitwise passthrough
        rec.omega_out = rec.omega_in;
        for (int k = 0; k <= grids.nz; ++k)
            if (want_probe(k)) rec.probes.emplace_back(k, rec.omega_in);
        return rec;
    }

    const int threads = opts.threads > 0 ? opts.threads : detail::default_threads();
    const detail::BlochRates rates(medium);
    const auto deltas = grids.deltas();
    const double dz = medium.length_mm / grids.nz;
    const cplx ik_dz = cplx{0.0, coupling.kappa * dz};

    std::vector<cplx> field(rec.omega_in);
    std::vector<cplx> pol(grids.nt), field_mid(grids.nt);
    StepStats stats;

    if (want_probe(0)) rec.probes.emplace_back(0, field);
    for (int k = 0; k < grids.nz; ++k) {
        try {
            // predictor: atoms driven by the field entering the slice
            SliceState atoms = detail::slice_from_population(pop0, k, grids.n_delta);
            detail::integrate_slice(atoms, field, grids.dt_us, rates, weights, deltas, pol,
                                    threads, &stats);
            for (int j = 0; j < grids.nt; ++j)
                field_mid[j] = field[j] + 0.5 * ik_dz * pol[j];
            // corrector: same atoms re-run under the slice-averaged field
            atoms = detail::slice_from_population(pop0, k, grids.n_delta);
            detail::integrate_slice(atoms, field_mid, grids.dt_us, rates, weights, deltas,
                                    pol, threads, &stats);
            for (int j = 0; j < grids.nt; ++j) field[j] += ik_dz * pol[j];
        } catch (const numeric_error& e) {
            throw numeric_error(std::string(e.what()) + " in slice " + std::to_string(k));
        }
        if (want_probe(k + 1)) rec.probes.emplace_back(k + 1, field);
    }
    rec.omega_out = std::move(field);
    rec.max_pop_drift = stats.max_drift;
    return rec;
}

namespace detail {

// Weak Gaussian probe used for coupling calibration and convergence checks;
// narrowband relative to the spectral window, area well below saturation.
inline std::pair<PulseSequence, Grids> calibration_probe(const Grids& grids) {
    Pulse p;
    p.label = PulseLabel::custom;
    p.shape = PulseShape::gaussian;
    p.duration_us = std::max(2.0, 24.0 / grids.delta_max);
    p.t_start_us = Pulse::gaussian_support_fwhm * p.duration_us - 0.5 * p.duration_us;
    p.rabi_peak = Pulse::rabi_for_area(0.005 * std::numbers::pi, p.duration_us,
                                       PulseShape::gaussian);
    PulseSequence seq;
    seq.pulses.push_back(p);
    seq.t_end_us = 2.0 * Pulse::gaussian_support_fwhm * p.duration_us + 1.0;
    Grids g = Grids::with_horizon(grids, seq.t_end_us);
    return {seq, g};
}

} // namespace detail

// Energy transmission of the calibration probe through the unburned (or
// given) medium at a trial coupling.
inline double probe_transmission(const MediumSpec& medium, const Grids& grids,
                                 const SpectralWeights& weights, double kappa,
                                 const PopulationMap* pop0 = nullptr, int threads = 0,
                                 int nz_override = 0) {
    auto [seq, cal_grids] = detail::calibration_probe(grids);
    if (nz_override > 0) cal_grids.nz = nz_override;
    const auto omega_in = render_sequence(seq, cal_grids);
    MarchOptions opts;
    opts.threads = threads;
    const auto rec = march(omega_in, medium, cal_grids, weights, pop0,
                           CouplingConstant{kappa}, opts);
    const double e_in = trace_energy(rec.omega_in, cal_grids.dt_us);
    const double e_out = trace_energy(rec.omega_out, cal_grids.dt_us);
    return e_out / e_in;
}

// Analytic starting estimate: d0 = kappa * pi * rho(0) * l for a spectral
// window much wider than the probe bandwidth.
inline double coupling_estimate(const MediumSpec& medium, const Grids& grids,
                                const SpectralWeights& weights) {
    const double rho0 = weights.center_density(grids.delta_step());
    return medium.optical_depth_d0 / (std::numbers::pi * rho0 * medium.length_mm);
}

// Bisection on kappa until the weak-probe energy transmission matches
// exp(-optical_depth_d0).  The bracket starts around the analytic estimate
// and is widened geometrically if needed.
inline CouplingConstant calibrate_coupling(const MediumSpec& medium, const Grids& grids,
                                           const SpectralWeights& weights, int threads = 0) {
    medium.validate();
    grids.validate();
    if (medium.optical_depth_d0 == 0.0) return {0.0};

    const double target = std::exp(-medium.optical_depth_d0);
    const double rel_tol = 3e-3;
    const double kappa0 = coupling_estimate(medium, grids, weights);

    double lo = kappa0 / 1.05, hi = kappa0 * 1.05;
    double t_lo = probe_transmission(medium, grids, weights, lo, nullptr, threads);
    double t_hi = probe_transmission(medium, grids, weights, hi, nullptr, threads);
    if (t_lo < t_hi)
        throw numeric_error("calibrate_coupling: transmission is not monotone in kappa");
    for (int tries = 0; (t_lo < target || t_hi > target) && tries < 6; ++tries) {
        if (t_lo < target) {
            lo /= 2.0;
            t_lo = probe_transmission(medium, grids, weights, lo, nullptr, threads);
        }
        if (t_hi > target) {
            hi *= 2.0;
            t_hi = probe_transmission(medium, grids, weights, hi, nullptr, threads);
        }
    }
    if (t_lo < target || t_hi > target)
        throw numeric_error("calibrate_coupling: failed to bracket the Beer's-law target");

    double mid = 0.5 * (lo + hi), t_mid = 0.0;
    for (int it = 0; it < 60; ++it) {
        mid = 0.5 * (lo + hi);
        t_mid = probe_transmission(medium, grids, weights, mid, nullptr, threads);
        if (std::abs(t_mid - target) <= rel_tol * target) return {mid};
        if (t_mid > target)
            lo = mid;
        else
            hi = mid;
    }
    throw numeric_error("calibrate_coupling: bisection failed to converge");
}

} // namespace slowecho
