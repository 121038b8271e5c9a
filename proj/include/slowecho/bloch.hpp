// bloch.hpp - optical Bloch equations for an open two-level system with a
// shelf reservoir, integrated per detuning class with fixed-step RK4.
//
// Model (angular units, rad/us):
//   dsigma/dt = (i*Delta - 1/T2)*sigma + (i/2)*Omega*(n_g - n_e)
//   dn_e/dt   = -n_e/T1 + Im(conj(Omega)*sigma)
//   dn_g/dt   = +(1-b)*n_e/T1 + n_s/T_shelf - Im(conj(Omega)*sigma)
//   dn_s/dt   = +b*n_e/T1 - n_s/T_shelf
// The population derivatives sum to zero identically; step_rk4 renormalizes
// rounding-level drift and treats anything larger as an integrator fault.
#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "slowecho/core.hpp"
#include "slowecho/errors.hpp"

namespace slowecho {

struct AtomState {
    cplx sigma{0.0, 0.0};
    double n_g = 1.0;
    double n_e = 0.0;
    double n_s = 0.0;
};

struct AtomDerivs {
    cplx dsigma;
    double dn_g, dn_e, dn_s;
};

namespace detail {

struct BlochRates {
    double g1, g2, gs, b;
    explicit BlochRates(const MediumSpec& m)
        : g1(1.0 / m.t1_opt_us), g2(1.0 / m.t2_opt_us),
          gs(1.0 / m.shelf_lifetime_us), b(m.shelf_branch_b) {}
};

inline void bloch_rhs(double sr, double si, double ng, double ne, double ns,
                      double o_re, double o_im, double delta, const BlochRates& r,
                      double& dsr, double& dsi, double& dng, double& dne, double& dns) {
    const double w = ng - ne;
    dsr = -r.g2 * sr - delta * si - 0.5 * o_im * w;
    dsi = delta * sr - r.g2 * si + 0.5 * o_re * w;
    const double pump = o_re * si - o_im * sr;  // Im(conj(Omega)*sigma)
    dne = -ne * r.g1 + pump;
    dng = (1.0 - r.b) * r.g1 * ne + r.gs * ns - pump;
    dns = r.b * r.g1 * ne - r.gs * ns;
}

} // namespace detail

inline AtomDerivs derivative(const AtomState& s, cplx omega, double delta,
                             const MediumSpec& medium) {
    const detail::BlochRates r(medium);
    double dsr, dsi, dng, dne, dns;
    detail::bloch_rhs(s.sigma.real(), s.sigma.imag(), s.n_g, s.n_e, s.n_s,
                      omega.real(), omega.imag(), delta, r, dsr, dsi, dng, dne, dns);
    return {cplx{dsr, dsi}, dng, dne, dns};
}

// All frequency classes of one z position, stored as structure-of-arrays.
struct SliceState {
    int z_index = 0;
    std::vector<double> sig_re, sig_im, n_g, n_e, n_s;

    SliceState() = default;
    explicit SliceState(int n, int z_idx = 0)
        : z_index(z_idx), sig_re(n, 0.0), sig_im(n, 0.0),
          n_g(n, 1.0), n_e(n, 0.0), n_s(n, 0.0) {}

    int size() const { return static_cast<int>(n_g.size()); }

    AtomState atom(int i) const {
        return {cplx{sig_re[i], sig_im[i]}, n_g[i], n_e[i], n_s[i]};
    }
    void set_atom(int i, const AtomState& a) {
        sig_re[i] = a.sigma.real();
        sig_im[i] = a.sigma.imag();
        n_g[i] = a.n_g;
        n_e[i] = a.n_e;
        n_s[i] = a.n_s;
    }
};

struct StepStats {
    double max_drift = 0.0;  // worst |n_g+n_e+n_s - 1| seen before renormalization
};

// One RK4 step for the classes [i_lo, i_hi) of a slice.  The drive is
// sampled at the step start, midpoint and end.  Population-sum drift is
// renormalized when below 1e-7 and reported as an integrator fault above;
// populations outside [-1e-6, 1+1e-6] raise an instability error.
// The class loop is branch- and call-free so it vectorizes; faults are
// detected via flags and raised after the loop.
inline void step_rk4_range(SliceState& slice, int i_lo, int i_hi,
                           cplx omega_t0, cplx omega_mid, cplx omega_t1, double dt,
                           const detail::BlochRates& rates, std::span<const double> deltas,
                           StepStats* stats = nullptr) {
    const double o0r = omega_t0.real(), o0i = omega_t0.imag();
    const double omr = omega_mid.real(), omi = omega_mid.imag();
    const double o1r = omega_t1.real(), o1i = omega_t1.imag();
    const double h = dt, h2 = 0.5 * dt, h6 = dt / 6.0;
    const double g1 = rates.g1, g2 = rates.g2, gs = rates.gs, b = rates.b;

    double* __restrict p_sr = slice.sig_re.data();
    double* __restrict p_si = slice.sig_im.data();
    double* __restrict p_ng = slice.n_g.data();
    double* __restrict p_ne = slice.n_e.data();
    double* __restrict p_ns = slice.n_s.data();
    const double* __restrict p_d = deltas.data();

    double worst = 0.0;
    int bad = 0;
#pragma omp simd reduction(max : worst) reduction(| : bad)
    for (int i = i_lo; i < i_hi; ++i) {
        const double d = p_d[i];
        const double sr = p_sr[i], si = p_si[i];
        const double ng = p_ng[i], ne = p_ne[i], ns = p_ns[i];

#define SLOWECHO_RHS(xsr, xsi, xng, xne, xns, ore, oim, dsr, dsi, dng, dne, dns) \
        {                                                                        \
            const double w_ = (xng) - (xne);                                     \
            dsr = -g2 * (xsr) - d * (xsi) - 0.5 * (oim)*w_;                      \
            dsi = d * (xsr)-g2 * (xsi) + 0.5 * (ore)*w_;                         \
            const double pump_ = (ore) * (xsi) - (oim) * (xsr);                  \
            dne = -(xne)*g1 + pump_;                                             \
            dng = (1.0 - b) * g1 * (xne) + gs * (xns)-pump_;                     \
            dns = b * g1 * (xne)-gs * (xns);                                     \
        }

        double k1sr, k1si, k1ng, k1ne, k1ns;
        SLOWECHO_RHS(sr, si, ng, ne, ns, o0r, o0i, k1sr, k1si, k1ng, k1ne, k1ns)
        double k2sr, k2si, k2ng, k2ne, k2ns;
        SLOWECHO_RHS(sr + h2 * k1sr, si + h2 * k1si, ng + h2 * k1ng, ne + h2 * k1ne,
                     ns + h2 * k1ns, omr, omi, k2sr, k2si, k2ng, k2ne, k2ns)
        double k3sr, k3si, k3ng, k3ne, k3ns;
        SLOWECHO_RHS(sr + h2 * k2sr, si + h2 * k2si, ng + h2 * k2ng, ne + h2 * k2ne,
                     ns + h2 * k2ns, omr, omi, k3sr, k3si, k3ng, k3ne, k3ns)
        double k4sr, k4si, k4ng, k4ne, k4ns;
        SLOWECHO_RHS(sr + h * k3sr, si + h * k3si, ng + h * k3ng, ne + h * k3ne,
                     ns + h * k3ns, o1r, o1i, k4sr, k4si, k4ng, k4ne, k4ns)
#undef SLOWECHO_RHS

        p_sr[i] = sr + h6 * (k1sr + 2.0 * (k2sr + k3sr) + k4sr);
        p_si[i] = si + h6 * (k1si + 2.0 * (k2si + k3si) + k4si);
        double g = ng + h6 * (k1ng + 2.0 * (k2ng + k3ng) + k4ng);
        double e = ne + h6 * (k1ne + 2.0 * (k2ne + k3ne) + k4ne);
        double s = ns + h6 * (k1ns + 2.0 * (k2ns + k3ns) + k4ns);

        const double sum = g + e + s;
        const double adrift = std::abs(sum - 1.0);
        worst = std::max(worst, adrift);
        bad |= !((sum > 0.5) & (sum < 1.5));  // also traps NaN before the divide
        const double inv = 1.0 / sum;
        g *= inv;
        e *= inv;
        s *= inv;
        bad |= (g < -1e-6) | (g > 1.0 + 1e-6) | (e < -1e-6) | (e > 1.0 + 1e-6) |
               (s < -1e-6) | (s > 1.0 + 1e-6);
        p_ng[i] = g;
        p_ne[i] = e;
        p_ns[i] = s;
    }
    if (worst >= 1e-7) [[unlikely]]
        throw numeric_error("population sum drift " + std::to_string(worst) +
                            " in classes [" + std::to_string(i_lo) + "," +
                            std::to_string(i_hi) + ")");
    if (bad) [[unlikely]]
        throw numeric_error("population out of range in classes [" + std::to_string(i_lo) +
                            "," + std::to_string(i_hi) + ")");
    if (stats) stats->max_drift = std::max(stats->max_drift, worst);
}

inline void step_rk4(SliceState& slice, cplx omega_t0, cplx omega_mid, cplx omega_t1,
                     double dt, const MediumSpec& medium, std::span<const double> deltas,
                     StepStats* stats = nullptr) {
    if (static_cast<int>(deltas.size()) != slice.size())
        throw config_error("step_rk4: deltas length does not match slice width");
    const detail::BlochRates rates(medium);
    step_rk4_range(slice, 0, slice.size(), omega_t0, omega_mid, omega_t1, dt, rates, deltas,
                   stats);
}

// Drive held constant across the step.
inline void step_rk4(SliceState& slice, cplx omega_t, double dt, const MediumSpec& medium,
                     std::span<const double> deltas, StepStats* stats = nullptr) {
    step_rk4(slice, omega_t, omega_t, omega_t, dt, medium, deltas, stats);
}

// Weighted coherence sum feeding the field propagation.  Summation runs
// in ascending detuning-index order so results are reproducible.
inline cplx polarization(const SliceState& slice, const SpectralWeights& weights) {
    if (weights.size() != slice.size())
        throw config_error("polarization: weights length does not match slice width");
    double re = 0.0, im = 0.0;
    for (int i = 0; i < slice.size(); ++i) {
        re += weights.weights[i] * slice.sig_re[i];
        im += weights.weights[i] * slice.sig_im[i];
    }
    return {re, im};
}

} // namespace slowecho
