#pragma once
// Closed-form reference values for the test suite. Everything in this header
// is computed from elementary formulas or frozen from an independent
// high-precision evaluation, never from the library under test, so the tests
// compare code against fixed mathematics.

#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

namespace refs {

using Cx = std::complex<double>;

// --- two-mode squeezed vacuum -----------------------------------------------
// exp(z ab - z* a^+b^+)|00> with z = r e^{i phi} lives on the |n,n> ladder with
// Schmidt amplitudes c_n = (-e^{i phi} tanh r)^n / cosh r.

inline std::vector<Cx> tmss_amplitudes(double r, double phi, int n_max) {
    std::vector<Cx> c(static_cast<size_t>(n_max) + 1);
    const Cx step = -std::exp(Cx(0.0, phi)) * std::tanh(r);
    Cx cur = Cx(1.0 / std::cosh(r), 0.0);
    for (int n = 0; n <= n_max; ++n) {
        c[static_cast<size_t>(n)] = cur;
        cur *= step;
    }
    return c;
}

// Second moments of any |n,n> ladder state: <n_a> = <n_b> = sum n |c_n|^2,
// <ab> = sum conj(c_{n-1}) n c_n, <a> = <b> = 0 by photon-number parity.
struct LadderMoments {
    double n = 0.0;
    Cx ab{0.0, 0.0};
};

inline LadderMoments ladder_moments(const std::vector<Cx>& c) {
    LadderMoments m;
    for (size_t n = 1; n < c.size(); ++n) {
        m.n += static_cast<double>(n) * std::norm(c[n]);
        m.ab += std::conj(c[n - 1]) * static_cast<double>(n) * c[n];
    }
    return m;
}

// EPR variance of a zero-mean state from its second moments.
inline double epr_variance(double n_a, double n_b, Cx ab, double theta) {
    return 2.0 + 2.0 * (n_a + n_b) + 4.0 * (std::exp(Cx(0.0, -2.0 * theta)) * ab).real();
}

inline double ideal_v_min(double r) { return 2.0 * std::exp(-2.0 * r); }
inline double ideal_v_max(double r) { return 2.0 * std::exp(2.0 * r); }
inline double tmss_mean_photons(double r) { return std::sinh(r) * std::sinh(r); }

// --- frozen spot values -------------------------------------------------------
inline constexpr double kSechSq1 = 0.4199743416140261;   // |<00|S(1)|00>|^2
inline constexpr double kSinhSq1 = 1.3810978455418155;   // <n> at r = 1
inline constexpr double kSinhSq15 = 4.533830997888882;   // <n> at r = 1.5
inline constexpr double kDb0178 = 10.506099933550871;    // -10 log10(0.178/2)
inline constexpr double kDb2em3 = 13.028834457097554;    // -10 log10(e^{-3}) = 30/ln 10

// V(pi/4) of exp(-i H_- t)|00> truncated to N Fock levels per mode, for
// r = |lambda| t in {0.25, 0.5, 1.0, 1.5}. Frozen from an independent matrix
// exponential of the tridiagonal |n,n>-ladder reduction (the dynamics from
// vacuum never leaves that ladder). At N=30 the r=1.5 state no longer fits in
// the truncation: the exact truncated value sits 0.491 above the untruncated
// 2 e^{-2r}, which is a property of the space, not of any propagator.
inline constexpr double kLadderR[4] = {0.25, 0.5, 1.0, 1.5};
inline constexpr double kTruncatedV30[4] = {1.213061319425, 0.735758882343,
                                            0.270685589635, 0.590623320971};
inline constexpr double kTruncatedV70[4] = {1.213061319425, 0.735758882343,
                                            0.270670566473, 0.099995185563};

// --- dissipation closed forms -------------------------------------------------
// Conventions as integrated by the solvers: rate * (c rho c^+ - {c^+c, rho}/2).

inline double damped_mean_photons(double n0, double kappa, double t) {
    return n0 * std::exp(-kappa * t);
}
inline double excited_survival(double gamma, double t) { return std::exp(-gamma * t); }
// |+><+| coherence under dephasing alone: rho_ge(t) = (1/2) e^{-gamma_ph t / 2}.
inline double dephased_coherence(double gamma_ph, double t) {
    return 0.5 * std::exp(-0.5 * gamma_ph * t);
}

// --- child-seed spot values ---------------------------------------------------
// Frozen from an independent splitmix64 evaluation; changing the derivation
// would silently re-randomize every ensemble, so it is pinned here.
struct SeedCase {
    std::uint64_t master;
    int index;
    std::uint64_t expected;
};
inline constexpr SeedCase kSeedCases[] = {
    {0u, 0, 0xE220A8397B1DCDAFULL},
    {20260823u, 0, 0x0AB4B1414796787FULL},
    {20260823u, 1, 0x5EC4ABBD36B012C4ULL},
    {20260823u, 599, 0xE143EDF4287F467EULL},
    {12345u, 7, 0x6E7411B06820371CULL},
};

} // namespace refs
