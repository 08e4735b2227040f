#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tmsq/fockspace.hpp"
#include "tmsq/model.hpp"

namespace tmsq {

// Decay/dephasing rates, angular frequency in the same units as the
// Hamiltonian (the scenario layer converts from multiples of lambda or SI).
struct DecoherenceRates {
    double gamma = 0.0;    // qubit energy decay
    double gamma_ph = 0.0; // qubit dephasing
    double kappa_a = 0.0;  // mode a photon loss
    double kappa_b = 0.0;  // mode b photon loss

    double total() const { return gamma + gamma_ph + kappa_a + kappa_b; }
    bool any() const { return total() > 0.0; }
};

// One collapse channel: evolution includes rate * (c rho c^+ - {c^+c, rho}/2),
// which is the (rate/2) D[c] form with D[c]rho = 2 c rho c^+ - c^+c rho - rho c^+c.
struct JumpChannel {
    OperatorMatrix op;
    double rate = 0.0;
    std::string name;
};

// Maps rates onto the subsystems present in `space`: gamma -> |g><e|,
// gamma_ph -> |e><e| (as-written dephasing operator), kappa_a -> a,
// kappa_b -> b. A positive rate whose subsystem is absent is a config error.
std::vector<JumpChannel> jump_channels(const HilbertSpec& space,
                                       const DecoherenceRates& rates);

// --- time grid --------------------------------------------------------------

struct TimeGrid {
    double t_start = 0.0;
    double t_end = 0.0;
    std::vector<double> output_times; // strictly increasing, first == t_start
    // Base step dt <= 2*pi / (safety_factor * omega_max); raise the factor for
    // runs that need tighter norm preservation.
    double safety_factor = 40.0;
    double dt_override = 0.0; // > 0 forces the target step directly

    static TimeGrid linspace(double t_start, double t_end, int samples);
    // t_end = r_max / |lambda|, samples equally spaced in r from 0.
    static TimeGrid from_squeezing_target(double r_max, double lambda_abs, int samples);

    int intervals() const { return static_cast<int>(output_times.size()) - 1; }
    void validate() const;
};

// Fixed-step partition of the grid: steps[j] RK4 steps inside output interval
// j. omega_max is the stiffest scale found (operator norm samples, coefficient
// frequencies, and any extra rate scale).
struct StepPlan {
    std::vector<int> steps;
    double omega_max = 0.0;
    double dt_target = 0.0;
    long long total_steps = 0;
};

StepPlan plan_steps(const TimeDependentOperator& H, const TimeGrid& grid,
                    double extra_rate_scale = 0.0);

// --- Schroedinger -----------------------------------------------------------

struct SchrodingerOptions {
    double norm_tolerance = 1e-6;     // max allowed | ||psi|| - 1 |
    bool renormalize = false;         // renormalize after each step
    double leak_warn_threshold = 1e-4; // top-two-level population warning level
};

struct SchrodingerResult {
    std::vector<double> times;
    std::vector<KetState> states; // at output times, as propagated (not renormalized)
    double max_norm_drift = 0.0;
    double max_leak = 0.0;
    std::vector<std::string> warnings;
    StepPlan plan;
};

// Fixed-step RK4. Throws step_size_too_large when the norm drifts beyond
// tolerance (renormalization off by default), integrator_failure on non-finite
// amplitudes.
SchrodingerResult propagate_schrodinger(const TimeDependentOperator& H,
                                        const KetState& psi0, const TimeGrid& grid,
                                        const SchrodingerOptions& opts = {});

// --- Lindblad ---------------------------------------------------------------

struct LindbladOptions {
    int dense_dim_cap = 512;           // dense rho is O(dim^2); beyond this use MCWF
    double leak_warn_threshold = 1e-4;
};

struct LindbladResult {
    std::vector<double> times;
    std::vector<DensityOperator> states; // symmetrized at each output time
    double max_trace_dev = 0.0;
    double max_leak = 0.0;
    std::vector<std::string> warnings;
    StepPlan plan;
};

LindbladResult propagate_lindblad(const TimeDependentOperator& H,
                                  const DecoherenceRates& rates,
                                  const DensityOperator& rho0, const TimeGrid& grid,
                                  const LindbladOptions& opts = {});

// --- Monte Carlo wave function ----------------------------------------------

struct JumpEvent {
    double t = 0.0;
    int channel = -1;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<KetState> states; // normalized at output times
    std::vector<JumpEvent> jumps;
    double max_leak = 0.0;
};

// Deterministic child-seed derivation (splitmix64 over a golden-ratio walk);
// stable across platforms and versions so ensembles are reproducible.
std::uint64_t child_seed(std::uint64_t master_seed, int trajectory_index);

// One quantum trajectory: integrate under H - (i/2) sum_k rate_k c_k^+ c_k,
// jump when the squared norm falls below a pre-drawn uniform threshold, pick
// the channel with probability proportional to rate_k ||c_k psi||^2,
// renormalize, redraw. Jump times are located within dt/16 by bisection.
Trajectory mcwf_trajectory(const TimeDependentOperator& H, const DecoherenceRates& rates,
                           const KetState& psi0, const TimeGrid& grid, std::uint64_t seed);

struct NamedObservable {
    std::string name;
    OperatorMatrix op;
};

struct JumpRecord {
    int trajectory = -1;
    double t = 0.0;
    int channel = -1;
};

struct TrajectoryEnsemble {
    int n_traj = 0;
    std::uint64_t master_seed = 0;
    std::vector<double> times;
    std::vector<std::string> observable_names;
    // values[k](i, j): observable k, trajectory i, output time j.
    std::vector<Eigen::MatrixXcd> values;
    std::vector<int> jump_counts; // per trajectory
    std::vector<JumpRecord> jump_records;
    double max_leak = 0.0;

    int index_of(const std::string& name) const;
    Eigen::VectorXcd mean_series(int k) const;
    // Standard error of the mean at each time: sqrt(sum|z - mean|^2 /
    // (n(n-1))). For Hermitian observables this is the usual real stderr.
    Eigen::VectorXd stderr_series(int k) const;
};

// Ensemble of trajectories with per-trajectory observable series. Trajectory i
// uses child_seed(master_seed, i) and is bit-identical to mcwf_trajectory run
// with that seed: the implementation shares the no-jump reference pass between
// trajectories (valid because a trajectory only departs from it at its first
// jump, and the first-crossing search reads the same norm sequence the naive
// loop would produce), so results do not depend on how the work is batched.
TrajectoryEnsemble mcwf_ensemble(const TimeDependentOperator& H,
                                 const DecoherenceRates& rates, const KetState& psi0,
                                 const TimeGrid& grid, int n_traj,
                                 std::uint64_t master_seed,
                                 const std::vector<NamedObservable>& observables);

} // namespace tmsq
