#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "slowecho/core.hpp"

using namespace slowecho;

TEST_CASE("flat weights on three classes are uniform thirds") {
    Grids g;
    g.n_delta = 3;
    g.delta_max = 1.0;
    auto w = build_weights(g, LineMode::flat);
    REQUIRE(w.weights[0] == Catch::Approx(1.0 / 3.0).margin(1e-15));
    REQUIRE(w.weights[1] == Catch::Approx(1.0 / 3.0).margin(1e-15));
    REQUIRE(w.weights[2] == Catch::Approx(1.0 / 3.0).margin(1e-15));
}

TEST_CASE("very wide gaussian line approaches the flat limit") {
    Grids g;
    g.n_delta = 101;
    g.delta_max = 10.0;
    auto w = build_weights(g, LineMode::gaussian, 1e6);
    double mn = 1e300, mx = 0.0;
    for (double v : w.weights) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    REQUIRE(mx / mn == Catch::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("gaussian weights drop to half at +-fwhm/2") {
    Grids g;
    g.n_delta = 101;
    g.delta_max = 10.0;
    // fwhm equal to the window width puts the half-max points on the edges
    auto w = build_weights(g, LineMode::gaussian, 2.0 * g.delta_max);
    const int c = w.center_index();
    REQUIRE(w.weights[c] / w.weights[0] == Catch::Approx(2.0).epsilon(0.01));
    REQUIRE(w.weights[c] / w.weights[g.n_delta - 1] == Catch::Approx(2.0).epsilon(0.01));
}

TEST_CASE("weights are normalized and symmetric for every mode") {
    for (int n : {3, 101, 301, 555}) {
        Grids g;
        g.n_delta = n;
        g.delta_max = 17.0;
        for (double fwhm : {0.0, 3.0, 40.0}) {
            auto w = fwhm == 0.0 ? build_weights(g, LineMode::flat)
                                 : build_weights(g, LineMode::gaussian, fwhm);
            double sum = 0.0;
            for (double v : w.weights) sum += v;
            REQUIRE(std::abs(sum - 1.0) < 1e-12);
            for (int i = 0; i < n / 2; ++i)
                REQUIRE(w.weights[i] == Catch::Approx(w.weights[n - 1 - i]).margin(1e-15));
            REQUIRE(w.deltas[n / 2] == 0.0);
        }
    }
}

TEST_CASE("grid refinement keeps weighted averages stable to 1%") {
    auto smooth = [](double d) { return std::exp(-d * d / 50.0) * (1.0 + 0.1 * d); };
    for (auto mode : {LineMode::flat, LineMode::gaussian}) {
        Grids g;
        g.n_delta = 151;
        g.delta_max = 12.0;
        auto avg = [&](const Grids& gr) {
            auto w = mode == LineMode::flat ? build_weights(gr, LineMode::flat)
                                            : build_weights(gr, LineMode::gaussian, 8.0);
            double s = 0.0;
            for (int i = 0; i < gr.n_delta; ++i) s += w.weights[i] * smooth(w.deltas[i]);
            return s;
        };
        Grids g2 = g;
        g2.n_delta = 2 * g.n_delta - 1;
        REQUIRE(avg(g2) == Catch::Approx(avg(g)).epsilon(0.01));
    }
}

TEST_CASE("build_weights rejects degenerate grids") {
    Grids g;
    g.n_delta = 1;
    REQUIRE_THROWS_AS(build_weights(g, LineMode::flat), config_error);
    g.n_delta = 101;
    g.delta_max = 0.0;
    REQUIRE_THROWS_AS(build_weights(g, LineMode::flat), config_error);
    g.delta_max = 5.0;
    REQUIRE_THROWS_AS(build_weights(g, LineMode::gaussian, -1.0), config_error);
}

TEST_CASE("grids validation enforces the documented bounds") {
    Grids g;
    g.validate();
    Grids bad = g;
    bad.nz = 16;
    REQUIRE_THROWS_AS(bad.validate(), config_error);
    bad = g;
    bad.n_delta = 300;
    REQUIRE_THROWS_AS(bad.validate(), config_error);
    bad = g;
    bad.dt_us = 0.01;  // 0.01 * 25 > 0.1
    REQUIRE_THROWS_AS(bad.validate(), config_error);
}

static Pulse square(PulseLabel l, double t0, double dur, double area) {
    Pulse p;
    p.label = l;
    p.t_start_us = t0;
    p.duration_us = dur;
    p.rabi_peak = Pulse::rabi_for_area(area, dur, PulseShape::square);
    return p;
}

TEST_CASE("paper-style schedule validates") {
    Grids g;
    g.dt_us = 0.002;
    g.nt = 12501;
    PulseSequence seq;
    seq.t_end_us = 25.0;
    seq.pulses = {square(PulseLabel::d, 0.0, 1.5, std::numbers::pi / 2),
                  square(PulseLabel::r, 9.0, 1.5, std::numbers::pi)};
    auto checked = validate_sequence(seq, g);
    REQUIRE(checked.pulses.size() == 2);
    REQUIRE(checked.pulses[0].label == PulseLabel::d);
}

TEST_CASE("overlapping pulses are rejected") {
    Grids g;
    PulseSequence seq;
    seq.t_end_us = 25.0;
    seq.pulses = {square(PulseLabel::d, 0.0, 1.5, 0.1),
                  square(PulseLabel::r, 0.0, 1.5, 0.1)};
    REQUIRE_THROWS_AS(validate_sequence(seq, g), config_error);
}

TEST_CASE("unresolvable duration is rejected") {
    Grids g;
    g.dt_us = 0.5;
    g.delta_max = 0.1;
    g.nt = 61;
    PulseSequence seq;
    seq.t_end_us = 30.0;
    seq.pulses = {square(PulseLabel::d, 0.0, 1.5, 0.01)};
    REQUIRE_THROWS_AS(validate_sequence(seq, g), config_error);
}

TEST_CASE("horizon must cover the expected echo") {
    Grids g;
    PulseSequence seq;
    seq.t_end_us = 15.0;  // echo expected at 2*9.75 - 0.75 = 18.75
    seq.pulses = {square(PulseLabel::d, 0.0, 1.5, 0.1),
                  square(PulseLabel::r, 9.0, 1.5, 0.1)};
    REQUIRE_THROWS_AS(validate_sequence(seq, g), config_error);
}

TEST_CASE("pulse areas and rendering agree") {
    Grids g;
    g.dt_us = 0.002;
    g.nt = 5001;
    for (auto shape : {PulseShape::square, PulseShape::gaussian}) {
        Pulse p;
        p.label = PulseLabel::d;
        p.t_start_us = 3.0;
        p.duration_us = 1.5;
        p.shape = shape;
        p.rabi_peak = Pulse::rabi_for_area(std::numbers::pi / 2, 1.5, shape);
        REQUIRE(p.area() == Catch::Approx(std::numbers::pi / 2).epsilon(1e-12));
        PulseSequence seq;
        seq.t_end_us = 10.0;
        seq.pulses = {p};
        auto field = render_sequence(seq, g);
        double area = 0.0;
        for (const auto& v : field) area += v.real() * g.dt_us;
        REQUIRE(area == Catch::Approx(std::numbers::pi / 2).epsilon(5e-3));
    }
}
