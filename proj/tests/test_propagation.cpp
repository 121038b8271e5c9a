#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "slowecho/propagation.hpp"
#include "test_util.hpp"

using namespace slowecho;

namespace {

Grids beer_grids() {
    Grids g;
    g.nz = 64;
    g.n_delta = 201;
    g.delta_max = 25.0;
    g.dt_us = 0.004;
    g.nt = 2;  // horizon set per run
    return g;
}

PulseSequence weak_gaussian_probe(double area_pi = 0.005) {
    Pulse p;
    p.label = PulseLabel::custom;
    p.shape = PulseShape::gaussian;
    p.duration_us = 2.0;
    p.t_start_us = 3.0;
    p.rabi_peak = Pulse::rabi_for_area(area_pi * std::numbers::pi, 2.0, PulseShape::gaussian);
    PulseSequence seq;
    seq.pulses = {p};
    seq.t_end_us = 10.0;
    return seq;
}

} // namespace

TEST_CASE("kappa = 0 is a bitwise passthrough") {
    MediumSpec m;
    auto g = Grids::with_horizon(beer_grids(), 10.0);
    auto w = build_weights(g, LineMode::flat);
    auto seq = weak_gaussian_probe();
    auto omega_in = render_sequence(seq, g);
    auto rec = march(omega_in, m, g, w, nullptr, {0.0});
    REQUIRE(rec.omega_out.size() == omega_in.size());
    for (size_t i = 0; i < omega_in.size(); ++i) REQUIRE(rec.omega_out[i] == omega_in[i]);
}

TEST_CASE("calibrated medium realizes Beer's law at d0 = 2.2") {
    MediumSpec m;  // d0 = 2.2
    auto g = beer_grids();
    auto w = build_weights(g, LineMode::flat);
    auto kappa = calibrate_coupling(m, g, w);
    REQUIRE(kappa.kappa == Catch::Approx(coupling_estimate(m, g, w)).epsilon(0.02));
    const double t = probe_transmission(m, g, w, kappa.kappa);
    REQUIRE(t == Catch::Approx(std::exp(-2.2)).margin(0.002));

    SECTION("halving the coupling takes the square root of the transmission") {
        const double t_half = probe_transmission(m, g, w, 0.5 * kappa.kappa);
        REQUIRE(t_half == Catch::Approx(std::sqrt(t)).epsilon(0.02));
    }
}

TEST_CASE("calibration is trivial for a transparent medium") {
    MediumSpec m;
    m.optical_depth_d0 = 0.0;
    auto g = beer_grids();
    auto w = build_weights(g, LineMode::flat);
    auto kappa = calibrate_coupling(m, g, w);
    REQUIRE(kappa.kappa == 0.0);
    REQUIRE(probe_transmission(m, g, w, kappa.kappa) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("weak-field response is linear in the input amplitude") {
    MediumSpec m;
    auto g = Grids::with_horizon(beer_grids(), 10.0);
    auto w = build_weights(g, LineMode::flat);
    const double kappa = coupling_estimate(m, g, w);
    auto seq = weak_gaussian_probe(0.005);
    auto omega_in = render_sequence(seq, g);
    std::vector<cplx> half(omega_in);
    for (auto& v : half) v *= 0.5;

    auto full_rec = march(omega_in, m, g, w, nullptr, {kappa});
    auto half_rec = march(half, m, g, w, nullptr, {kappa});
    double worst = 0.0, scale = 0.0;
    for (size_t i = 0; i < omega_in.size(); ++i) {
        worst = std::max(worst, std::abs(full_rec.omega_out[i] - 2.0 * half_rec.omega_out[i]));
        scale = std::max(scale, std::abs(full_rec.omega_out[i]));
    }
    REQUIRE(worst < 1e-3 * scale);
}

TEST_CASE("passive media only absorb") {
    MediumSpec m;
    auto g = Grids::with_horizon(beer_grids(), 10.0);
    auto w = build_weights(g, LineMode::flat);
    const double kappa = coupling_estimate(m, g, w);
    auto seq = weak_gaussian_probe(0.2);
    auto omega_in = render_sequence(seq, g);

    SECTION("unholed") {
        auto rec = march(omega_in, m, g, w, nullptr, {kappa});
        const double e_in = trace_energy(rec.omega_in, g.dt_us);
        const double e_out = trace_energy(rec.omega_out, g.dt_us);
        REQUIRE(e_out <= e_in * (1.0 + 1e-9));
    }
    SECTION("holed") {
        auto map = test_util::make_hole_map(g, 0.8, 1.0);
        auto rec = march(omega_in, m, g, w, &map, {kappa});
        const double e_in = trace_energy(rec.omega_in, g.dt_us);
        const double e_out = trace_energy(rec.omega_out, g.dt_us);
        REQUIRE(e_out <= e_in * (1.0 + 1e-9));
    }
}

TEST_CASE("march matches the frequency-domain linear response") {
    MediumSpec m;
    m.optical_depth_d0 = 1.0;
    // short-lived coherence so the single-shot response matches the
    // periodic (DFT) steady state within the window
    m.t1_opt_us = 2.0;
    m.t2_opt_us = 2.0;
    Grids g;
    g.nz = 48;
    g.n_delta = 101;
    g.delta_max = 10.0;
    g.dt_us = 0.01;
    g.nt = 1401;
    auto w = build_weights(g, LineMode::flat);
    const double kappa = coupling_estimate(m, g, w);

    PulseSequence seq = weak_gaussian_probe(0.001);
    seq.pulses[0].duration_us = 1.5;
    seq.pulses[0].t_start_us = 3.0;
    auto omega_in = render_sequence(seq, g);
    auto rec = march(omega_in, m, g, w, nullptr, {kappa});

    // independent oracle: discrete-comb transfer function applied in the
    // frequency domain via a direct DFT
    const int n = g.nt;
    const double g2 = 1.0 / m.t2_opt_us;
    std::vector<cplx> spec(n, cplx{0.0, 0.0});
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j) {
            const double ph = 2.0 * std::numbers::pi * k * j / n;
            spec[k] += omega_in[j] * cplx{std::cos(ph), std::sin(ph)};
        }
    const auto deltas = g.deltas();
    for (int k = 0; k < n; ++k) {
        const double omega =
            2.0 * std::numbers::pi * (k <= n / 2 ? k : k - n) / (n * g.dt_us);
        cplx chi{0.0, 0.0};
        for (int i = 0; i < g.n_delta; ++i)
            chi += w.weights[i] / cplx{g2, -(omega + deltas[i])};
        spec[k] *= std::exp(-0.5 * kappa * m.length_mm * chi);
    }
    std::vector<cplx> expect(n, cplx{0.0, 0.0});
    for (int j = 0; j < n; ++j) {
        for (int k = 0; k < n; ++k) {
            const double ph = 2.0 * std::numbers::pi * k * j / n;
            expect[j] += spec[k] * cplx{std::cos(ph), -std::sin(ph)};
        }
        expect[j] /= static_cast<double>(n);
    }

    double rms = 0.0, peak = 0.0;
    for (int j = 0; j < n; ++j) {
        rms += std::norm(rec.omega_out[j] - expect[j]);
        peak = std::max(peak, std::abs(rec.omega_out[j]));
    }
    rms = std::sqrt(rms / n);
    REQUIRE(rms < 1e-3 * peak);
}

TEST_CASE("doubling nz changes the transmitted energy by far less than 0.5%") {
    MediumSpec m;
    auto g = beer_grids();
    auto w = build_weights(g, LineMode::flat);
    const double kappa = coupling_estimate(m, g, w);
    const double t1 = probe_transmission(m, g, w, kappa);
    const double t2 = probe_transmission(m, g, w, kappa, nullptr, 0, 2 * g.nz);
    REQUIRE(std::abs(t2 - t1) / t1 < 0.005);
}

TEST_CASE("an echo emerges at 2 t_R - t_D through the thick unholed medium") {
    MediumSpec m;  // d0 = 2.2
    Grids g;
    g.nz = 48;
    g.n_delta = 151;
    g.delta_max = 12.0;
    g.dt_us = 0.005;
    g.nt = 2;
    auto w = build_weights(g, LineMode::flat);

    Pulse d;
    d.label = PulseLabel::d;
    d.t_start_us = 1.25;
    d.duration_us = 1.5;
    d.shape = PulseShape::gaussian;
    d.rabi_peak = Pulse::rabi_for_area(std::numbers::pi / 2, 1.5, PulseShape::gaussian);
    Pulse r;
    r.label = PulseLabel::r;
    r.t_start_us = 8.85;
    r.duration_us = 2.3;
    r.shape = PulseShape::gaussian;
    r.rabi_peak = Pulse::rabi_for_area(std::numbers::pi, 2.3, PulseShape::gaussian);
    PulseSequence seq;
    seq.pulses = {d, r};
    seq.t_end_us = 24.0;
    auto gh = Grids::with_horizon(g, seq.t_end_us);
    seq = validate_sequence(seq, gh);
    auto omega_in = render_sequence(seq, gh);

    auto kappa = calibrate_coupling(m, gh, w);
    auto rec = march(omega_in, m, gh, w, nullptr, kappa);

    // an interior intensity peak inside the window 2 t_R - t_D +- 2 durations:
    // the post-R free decay bottoms out and the echo rises above the valley
    const double t_echo = 2.0 * r.t_center() - d.t_center();  // 18.0
    const double half = 2.0 * r.duration_us;
    auto intensity_at = [&](double t) { return std::norm(rec.omega_out[size_t(t / gh.dt_us)]); };
    double valley = 1e300, t_valley = 0.0;
    for (double t = t_echo - half; t <= t_echo; t += gh.dt_us) {
        if (intensity_at(t) < valley) {
            valley = intensity_at(t);
            t_valley = t;
        }
    }
    double best_t = 0.0, best_p = 0.0;
    for (double t = t_valley; t <= t_echo + half; t += gh.dt_us) {
        if (intensity_at(t) > best_p) {
            best_p = intensity_at(t);
            best_t = t;
        }
    }
    REQUIRE(best_p > 3.0 * valley);
    REQUIRE(std::abs(best_t - t_echo) < half);
    REQUIRE(rec.max_pop_drift < 1e-9);
}

TEST_CASE("march rejects mismatched inputs and records probes") {
    MediumSpec m;
    auto g = Grids::with_horizon(beer_grids(), 10.0);
    auto w = build_weights(g, LineMode::flat);
    std::vector<cplx> wrong(g.nt + 5, cplx{0.0, 0.0});
    REQUIRE_THROWS_AS(march(wrong, m, g, w, nullptr, {1.0}), config_error);

    auto seq = weak_gaussian_probe();
    auto omega_in = render_sequence(seq, g);
    MarchOptions opts;
    opts.probe_z = {0, g.nz / 2, g.nz};
    auto rec = march(omega_in, m, g, w, nullptr, {coupling_estimate(m, g, w)}, opts);
    REQUIRE(rec.probes.size() == 3);
    REQUIRE(rec.probes.front().first == 0);
    REQUIRE(rec.probes.back().first == g.nz);
    for (size_t i = 0; i < rec.omega_in.size(); ++i)
        REQUIRE(rec.probes.front().second[i] == rec.omega_in[i]);
}
