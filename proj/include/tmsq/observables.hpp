#pragma once
// Quadratures, the two-mode EPR variance, squeezing in dB, and per-state
// diagnostics. Everything here is a pure function of the state.

#include <utility>
#include <vector>

#include "tmsq/fockspace.hpp"

namespace tmsq {

struct QuadratureBasis {
    double theta = 0.0; // squeezing direction, radians, modulo 2*pi
};

// One output row of a simulation run: time, variance, and derived quantities.
struct SqueezingRecord {
    double t = 0.0;
    double r = 0.0; // |lambda| * t
    double v_ar = 0.0;
    double v_ar_stderr = -1.0; // < 0 when not an ensemble estimate
    double db = 0.0;
    double theta = 0.0;     // angle the variance was evaluated at
    double theta_opt = 0.0; // minimizing angle (= theta when not optimizing)
    double v_ar_min = 0.0;  // variance at theta_opt
    bool entangled = false; // v_ar < 2
};

// X = (a e^{-i t} + a^+ e^{i t})/sqrt(2), P = -i(a e^{-i t} - a^+ e^{i t})/sqrt(2),
// embedded in `space` at subsystem `mode`.
std::pair<OperatorMatrix, OperatorMatrix> quadrature_ops(const HilbertSpec& space,
                                                         const std::string& mode,
                                                         double theta);

// Second moments of the two-mode reduction of a state. The EPR variance is an
// affine function of these, so collecting them once lets the angle scan reuse
// a single pass over the state.
struct EprMoments {
    double n_a = 0.0, n_b = 0.0;
    Complex a{0.0, 0.0}, b{0.0, 0.0}, ab{0.0, 0.0};
};

EprMoments collect_epr_moments(const KetState& psi);
EprMoments collect_epr_moments(const DensityOperator& rho);

// Total variance of u = X_a + X_b and v = P_a - P_b at angle theta, with the
// means subtracted. Tracing out anything outside the two modes is implicit:
// only mode moments enter.
double epr_variance(const EprMoments& m, double theta);
double epr_variance(const KetState& psi, double theta);
double epr_variance(const DensityOperator& rho, double theta);

// -10*log10(v/2); fails with invalid_variance for v <= 0.
double squeezing_db(double v_ar);
// Inverse of squeezing_db.
double db_to_variance(double db);

struct ThetaScan {
    double theta_opt = 0.0;
    double v_ar_min = 0.0;
};

// Coarse scan of [0, pi) followed by golden-section refinement; theta_opt is
// accurate to 1e-4 rad.
ThetaScan optimize_theta(const EprMoments& m, int grid_points = 32);
ThetaScan optimize_theta(const KetState& psi, int grid_points = 32);
ThetaScan optimize_theta(const DensityOperator& rho, int grid_points = 32);

struct Diagnostics {
    double n_a = 0.0, n_b = 0.0;
    std::vector<double> qubit_populations; // empty when the space has no qubit
    double sigma_z = 0.0;
    double leak_a = 0.0, leak_b = 0.0; // top-two Fock level population
};

Diagnostics diagnostics(const KetState& psi);
Diagnostics diagnostics(const DensityOperator& rho);

// Lossless two-mode squeezed vacuum references.
double ideal_epr_variance(double r);  // 2 e^{-2r}
double tmss_mean_photons(double r);   // sinh^2 r per mode

} // namespace tmsq
