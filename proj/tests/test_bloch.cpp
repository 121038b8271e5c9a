#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include "slowecho/bloch.hpp"
#include "test_util.hpp"

using namespace slowecho;
using test_util::decayless_medium;

TEST_CASE("ground state with no drive is stationary") {
    MediumSpec m;
    AtomState s;
    auto d = derivative(s, {0.0, 0.0}, 0.0, m);
    REQUIRE(std::abs(d.dsigma) == 0.0);
    REQUIRE(d.dn_g == 0.0);
    REQUIRE(d.dn_e == 0.0);
    REQUIRE(d.dn_s == 0.0);
}

TEST_CASE("free coherence decays at 1/T2") {
    MediumSpec m;
    AtomState s;
    s.sigma = {0.3, -0.2};
    auto d = derivative(s, {0.0, 0.0}, 0.0, m);
    REQUIRE(d.dsigma.real() == Catch::Approx(-0.3 / m.t2_opt_us).margin(1e-15));
    REQUIRE(d.dsigma.imag() == Catch::Approx(0.2 / m.t2_opt_us).margin(1e-15));
}

TEST_CASE("population derivatives sum to zero identically") {
    MediumSpec m;
    m.shelf_lifetime_us = 7.0;
    AtomState s;
    s.sigma = {0.11, 0.21};
    s.n_g = 0.5;
    s.n_e = 0.3;
    s.n_s = 0.2;
    auto d = derivative(s, {0.8, -0.4}, 3.0, m);
    REQUIRE(std::abs(d.dn_g + d.dn_e + d.dn_s) < 1e-16);
}

TEST_CASE("resonant pi pulse inverts the atom, matching sin^2(Omega t/2)") {
    auto m = decayless_medium();
    const int steps_per_flop = 1000;
    const double t_flop = 2.0;  // one full Rabi cycle
    const double omega = 2.0 * std::numbers::pi / t_flop;
    const double dt = t_flop / steps_per_flop;

    SliceState s(1);
    std::vector<double> deltas{0.0};
    StepStats stats;
    double rms = 0.0;
    int count = 0;
    double ne_at_pi = 0.0;
    for (int j = 0; j < 2 * steps_per_flop; ++j) {
        step_rk4(s, cplx{omega, 0.0}, dt, m, deltas, &stats);
        const double t = (j + 1) * dt;
        const double expect = std::pow(std::sin(0.5 * omega * t), 2);
        rms += std::pow(s.n_e[0] - expect, 2);
        ++count;
        if (j + 1 == steps_per_flop / 2) ne_at_pi = s.n_e[0];
    }
    rms = std::sqrt(rms / count);
    REQUIRE(std::abs(ne_at_pi - 1.0) < 1e-6);
    REQUIRE(rms < 1e-5);
    REQUIRE(stats.max_drift < 1e-9);
}

TEST_CASE("detuned free evolution tracks exp((i*Delta - 1/T2) t)") {
    MediumSpec m;
    m.t2_opt_us = 20.0;
    const double delta = 10.0, dt = 0.01;  // Delta*dt = 0.1, the grid bound
    SliceState s(1);
    s.sig_re[0] = 0.4;
    s.sig_im[0] = 0.1;
    s.n_g[0] = 0.7;
    s.n_e[0] = 0.2;
    s.n_s[0] = 0.1;
    const cplx sigma0{0.4, 0.1};
    std::vector<double> deltas{delta};
    for (int j = 0; j < 10; ++j) step_rk4(s, cplx{0.0, 0.0}, dt, m, deltas);
    const double t = 10 * dt;
    const cplx expect = sigma0 * std::exp(cplx{-t / m.t2_opt_us, delta * t});
    REQUIRE(std::abs(cplx{s.sig_re[0], s.sig_im[0]} - expect) < 1e-6 * std::abs(expect));
}

TEST_CASE("far-detuned weak drive obeys the adiabatic coherence bound") {
    MediumSpec m;  // Delta*T2 = 800 >> 1
    const double delta = 8.0, omega = 0.05, dt = 0.01, t_ramp = 10.0;
    SliceState s(1);
    std::vector<double> deltas{delta};
    auto drive = [&](double t) {
        const double f =
            t >= t_ramp ? 1.0 : 0.5 * (1.0 - std::cos(std::numbers::pi * t / t_ramp));
        return cplx{omega * f, 0.0};
    };
    double max_sig = 0.0;
    for (int j = 0; j < 2000; ++j) {
        const double t = j * dt;
        step_rk4(s, drive(t), drive(t + 0.5 * dt), drive(t + dt), dt, m, deltas);
        max_sig = std::max(max_sig, std::hypot(s.sig_re[0], s.sig_im[0]));
    }
    REQUIRE(max_sig <= omega / (2.0 * delta) * 1.1);
}

TEST_CASE("polarization reductions") {
    Grids g;
    g.n_delta = 3;
    g.delta_max = 1.0;
    auto w = build_weights(g, LineMode::flat);

    SliceState s(3);
    REQUIRE(polarization(s, w) == cplx{0.0, 0.0});

    SECTION("two equal classes of i average to i") {
        Grids g2 = g;
        SpectralWeights w2;
        w2.deltas = {-1.0, 1.0};
        w2.weights = {0.5, 0.5};
        SliceState s2(2);
        s2.sig_im[0] = 1.0;
        s2.sig_im[1] = 1.0;
        auto p = polarization(s2, w2);
        REQUIRE(p.real() == Catch::Approx(0.0).margin(1e-15));
        REQUIRE(p.imag() == Catch::Approx(1.0).margin(1e-15));
    }

    SECTION("conjugate-symmetric coherences give a real sum") {
        s.sig_re = {0.3, 0.5, 0.3};
        s.sig_im = {-0.2, 0.0, 0.2};
        auto p = polarization(s, w);
        REQUIRE(std::abs(p.imag()) < 1e-16);
    }

    SECTION("length mismatch is an error") {
        SliceState s4(4);
        REQUIRE_THROWS_AS(polarization(s4, w), config_error);
    }
}

TEST_CASE("population sum holds to 1e-9 over a million steps") {
    MediumSpec m;
    m.shelf_lifetime_us = 50.0;
    SliceState s(4);
    std::vector<double> deltas{-2.0, -0.5, 0.5, 2.0};
    StepStats stats;
    const double dt = 0.002;
    for (int j = 0; j < 1000000; ++j) {
        const double t = j * dt;
        const cplx om{0.8 * std::cos(0.01 * t), 0.3 * std::sin(0.007 * t)};
        step_rk4(s, om, dt, m, deltas, &stats);
    }
    REQUIRE(stats.max_drift < 1e-9);
}

TEST_CASE("coherence magnitude stays within the physical bound") {
    MediumSpec m;
    m.t1_opt_us = 20.0;
    m.t2_opt_us = 30.0;
    m.shelf_branch_b = 0.7;
    m.shelf_lifetime_us = 40.0;
    SliceState s(3);
    std::vector<double> deltas{-1.0, 0.0, 1.0};
    const double dt = 0.004;
    for (int j = 0; j < 20000; ++j) {
        const double t = j * dt;
        const cplx om{1.2 * std::exp(-0.05 * t), 0.0};
        step_rk4(s, om, dt, m, deltas);
        for (int i = 0; i < 3; ++i) {
            const double bound = 0.5 * (s.n_g[i] + s.n_e[i]) + 1e-9;
            REQUIRE(std::hypot(s.sig_re[i], s.sig_im[i]) <= bound + 1e-12);
        }
    }
}

namespace {

// instantaneous resonant rotation by `theta` about x, applied classwise
void hard_rotation(SliceState& s, double theta) {
    const double ct = std::cos(theta), st = std::sin(theta);
    for (int i = 0; i < s.size(); ++i) {
        const double v2 = 2.0 * s.sig_im[i];          // 2 Im(sigma)
        const double w = s.n_g[i] - s.n_e[i];         // drive inversion
        const double v2p = v2 * ct + w * st;
        const double wp = -v2 * st + w * ct;
        s.sig_im[i] = 0.5 * v2p;
        const double tot = s.n_g[i] + s.n_e[i];
        s.n_g[i] = 0.5 * (tot + wp);
        s.n_e[i] = 0.5 * (tot - wp);
    }
}

} // namespace

TEST_CASE("pi/2 - pi sequence on a flat comb rebuilds coherence at t = 2 tau") {
    auto m = decayless_medium();
    Grids g;
    g.n_delta = 301;
    g.delta_max = 25.0;
    g.dt_us = 0.002;
    auto w = build_weights(g, LineMode::flat);
    auto deltas = g.deltas();

    const double tau = 3.0, t_end = 8.0;
    const int n_tau = static_cast<int>(tau / g.dt_us + 0.5);
    const int n_end = static_cast<int>(t_end / g.dt_us + 0.5);

    SliceState s(g.n_delta);
    hard_rotation(s, std::numbers::pi / 2);
    double best_t = 0.0, best_p = 0.0;
    for (int j = 0; j < n_end; ++j) {
        if (j == n_tau) hard_rotation(s, std::numbers::pi);
        step_rk4(s, cplx{0.0, 0.0}, g.dt_us, m, deltas);
        const double t = (j + 1) * g.dt_us;
        if (t > tau + 0.5) {
            const double p = std::abs(polarization(s, w));
            if (p > best_p) {
                best_p = p;
                best_t = t;
            }
        }
    }
    REQUIRE(best_p > 0.4);  // near-complete rebuild of |P| = 1/2
    REQUIRE(std::abs(best_t - 2.0 * tau) <= g.dt_us + 1e-12);
}

TEST_CASE("integrator faults raise numeric errors") {
    MediumSpec m;
    SliceState s(1);
    std::vector<double> deltas{0.0};
    // a absurdly large step makes RK4 blow up
    REQUIRE_THROWS_AS(
        [&] {
            for (int j = 0; j < 200; ++j) step_rk4(s, cplx{50.0, 0.0}, 1.0, m, deltas);
        }(),
        numeric_error);
}
