#pragma once

#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "tmsq/fockspace.hpp"

namespace tmsq {

// Physical inputs. All frequencies are angular and expressed in units of a
// reference coupling g, so time is in units of 1/g. Couplings and the drive
// amplitude may be complex in general; the stock parameter sets are real.
struct ModelParams {
    Complex g_a{1.0, 0.0};
    Complex g_b{1.0, 0.0};
    double omega_0 = 500.0;    // g <-> e transition frequency
    double omega_ef = 2500.0;  // e <-> f transition frequency
    Complex Omega{50.0, 0.0};  // half Rabi frequency (drive amplitude 2*Omega)
    double omega_d = 500.0;    // drive frequency; kept equal to omega_0 (resonant drive)
    double Delta = 90.0;       // mode-a detuning from the qubit, delta_a = omega_a - omega_0
    int qubit_levels = 2;
    double theta = std::numbers::pi / 4; // default quadrature reporting angle
};

// Quantities fixed by ModelParams. delta is the two-photon mismatch that the
// placement of mode b cancels against the Stark shifts; lambda is the pair
// generation rate.
struct DerivedParams {
    double eta = 0.0;     // 2*Omega - Delta
    double chi_a = 0.0;   // |g_a|^2 / (4 eta)
    double chi_b = 0.0;   // |g_b|^2 / (4 eta)
    Complex lambda{0.0, 0.0}; // g_a * g_b / (4 eta)
    double delta = 0.0;   // -(chi_a + chi_b)
    double delta_a = 0.0; // = Delta
    double delta_b = 0.0; // = -Delta - delta
    double omega_a = 0.0; // omega_0 + delta_a
    double omega_b = 0.0; // omega_0 + delta_b
    double omega_d = 0.0; // = omega_0
};

// Deterministic pure arithmetic: identical inputs give bit-identical outputs.
// Errors: degenerate_detuning when 2*Omega == Delta; config_invalid when the
// drive amplitude has a phase (gauge it into the qubit basis first) or when
// omega_d != omega_0 (the reduction assumes a resonant drive).
DerivedParams derive(const ModelParams& p);

// --- regime validation ------------------------------------------------------

// One scale-separation inequality |left| >> |right|, reported as a ratio.
struct RegimeCheck {
    std::string name;
    double left = 0.0;
    double right = 0.0;
    double ratio = 0.0;     // |left| / |right|, +inf when right == 0
    double threshold = 0.0;
    bool strict = false;    // pass needs ratio > threshold instead of >=
    bool pass = false;
};

struct RegimeReport {
    std::vector<RegimeCheck> checks;
    bool all_pass = true;
    std::vector<std::string> warnings; // one line per failed check
};

struct RegimeThresholds {
    double ratio = 3.0;          // generic separation ratios
    double drive_rwa = 5.0;      // (omega_0 + omega_d) / (2 Omega), strict
    double anharmonicity = 5.0;  // |omega_ef| / omega_0
};

// Evaluates the separations the two-level / rotating-wave / dispersive
// reductions rest on. Report only, never throws; ratios with zero denominator
// pass trivially.
RegimeReport validate_regime(const ModelParams& p, const DerivedParams& d,
                             const RegimeThresholds& thresholds = {});

// --- time-dependent operators ----------------------------------------------

// H(t) = constant + sum_k coeff_k(t) * op_k. Terms carry the angular
// frequency of their coefficient so integrators can choose a step size
// without probing the functions.
class TimeDependentOperator {
public:
    struct Term {
        OperatorMatrix op;
        std::function<Complex(double)> coeff;
        double angular_frequency = 0.0;
        std::string name;
    };

    explicit TimeDependentOperator(OperatorMatrix constant);

    void add_term(OperatorMatrix op, std::function<Complex(double)> coeff,
                  double angular_frequency, std::string name = "");

    const HilbertSpec& space() const { return constant_.space; }
    int dim() const { return constant_.space.total_dim(); }
    bool is_constant() const { return terms_.empty(); }
    const OperatorMatrix& constant_part() const { return constant_; }
    const std::vector<Term>& terms() const { return terms_; }

    // out = H(t) * x. out must already have the right size; no allocation.
    void apply(double t, const DenseVec& x, DenseVec& out) const;

    SparseMat materialize(double t) const;

    // Fastest coefficient oscillation among the terms, 0 if constant.
    double max_coefficient_frequency() const;

private:
    OperatorMatrix constant_;
    std::vector<Term> terms_;
};

// Max row sum of entry magnitudes: cheap upper bound on the spectral radius,
// used for integrator step control.
double inf_norm(const SparseMat& m);

// --- Hamiltonian builders ---------------------------------------------------
// Each builder checks that `space` carries the subsystems it needs (mode_a,
// mode_b, and a qubit with the right level count) and throws level_mismatch
// otherwise.

// Lab frame, three-level atom, no approximation beyond truncation:
//   omega_a n_a + omega_b n_b + (omega_0/2) sigma_z + (omega_0/2 + omega_ef) |f><f|
//   + [g_a(a + a^+) + g_b(b + b^+) + 2 Omega cos(omega_d t)] * (dipole g<->e and e<->f)
// Requires real g_a, g_b, Omega (a lab-frame dipole coupling is real up to a
// basis phase); throws config_invalid otherwise.
TimeDependentOperator build_h_full(const ModelParams& p, const DerivedParams& d,
                                   const HilbertSpec& space);

// Two-level atom, counter-rotating dipole terms dropped:
//   H_0 + (g_a a + g_b b + Omega e^{-i omega_d t}) |e><g| + h.c.
//   with H_0 = omega_a n_a + omega_b n_b + (omega_0/2) sigma_z
TimeDependentOperator build_h_rwa(const ModelParams& p, const DerivedParams& d,
                                  const HilbertSpec& space);

// Interaction picture of the above with respect to its free part:
//   (g_a e^{-i delta_a t} a + g_b e^{-i delta_b t} b + Omega) |e><g| + h.c.
TimeDependentOperator build_v_i(const ModelParams& p, const DerivedParams& d,
                                const HilbertSpec& space);

// Second-order effective Hamiltonian in the dressed |+>/|-> basis:
//   (chi_a a a^+ + chi_b b^+ b) P_+ - (chi_a a^+ a + chi_b b b^+) P_-
//   + (lambda e^{i delta t} a b + h.c.)(P_- - P_+)
TimeDependentOperator build_h_eff(const ModelParams& p, const DerivedParams& d,
                                  const HilbertSpec& space);

// Pair-creation generator on the two modes alone: lambda a b + lambda* a^+ b^+.
OperatorMatrix build_h_minus(const DerivedParams& d, const HilbertSpec& space);

// --- squeezing operator -----------------------------------------------------

// exp(zeta a b - zeta* a^+ b^+) on the two-mode space, by exact
// eigendecomposition of the anti-Hermitian generator (unitary to roundoff).
// Acting on vacuum it creates the standard two-mode squeezed state with
// r = |zeta|; evolving vacuum under build_h_minus for time tau matches
// squeeze_operator(-i lambda tau). Before returning, the squeezed-vacuum
// column is checked: if its top-two-level occupation on either mode exceeds
// max_top_level_leak, the truncation cannot hold the state and truncation_leak
// is thrown.
OperatorMatrix squeeze_operator(Complex zeta, const HilbertSpec& space,
                                double max_top_level_leak = 1e-6);

// --- frame transforms -------------------------------------------------------

// exp[-i (Omega |e><g| + Omega* |g><e|) t] on the atom alone; the f level, if
// present, is untouched. Diagonalizes the resonant drive: its eigenstates are
// the |+>/|-> basis of build_h_eff.
OperatorMatrix frame_u_drive(const ModelParams& p, double t);

// exp[+i (chi_a n_a + chi_b n_b) t] on the two-mode space: the number-diagonal
// phase accumulated by the Stark shifts. Apply the adjoint to strip those
// phases from states evolved in the dressed frame.
OperatorMatrix frame_u_minus(const DerivedParams& d, const HilbertSpec& space, double t);

} // namespace tmsq
