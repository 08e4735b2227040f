#include "tmsq/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>

namespace tmsq {

std::vector<JumpChannel> jump_channels(const HilbertSpec& space,
                                       const DecoherenceRates& rates) {
    if (rates.gamma < 0 || rates.gamma_ph < 0 || rates.kappa_a < 0 || rates.kappa_b < 0) {
        fail(ErrorCode::config_invalid, "decoherence rates must be >= 0");
    }
    std::vector<JumpChannel> out;
    auto need = [&](const char* label, const char* what) {
        if (!space.has(label)) {
            fail(ErrorCode::config_invalid,
                 std::string(what) + " rate is positive but space " + space.describe() +
                     " has no '" + label + "' subsystem");
        }
    };
    if (rates.gamma > 0) {
        need("qubit", "qubit decay");
        out.push_back({embed(atom_op(space.dim_of("qubit"), AtomOp::sigma_ge), space, "qubit"),
                       rates.gamma, "gamma"});
    }
    if (rates.gamma_ph > 0) {
        need("qubit", "qubit dephasing");
        out.push_back({embed(atom_op(space.dim_of("qubit"), AtomOp::sigma_ee), space, "qubit"),
                       rates.gamma_ph, "gamma_ph"});
    }
    if (rates.kappa_a > 0) {
        need("mode_a", "mode a decay");
        out.push_back({embed(annihilation_op(space.dim_of("mode_a"), "mode_a"), space, "mode_a"),
                       rates.kappa_a, "kappa_a"});
    }
    if (rates.kappa_b > 0) {
        need("mode_b", "mode b decay");
        out.push_back({embed(annihilation_op(space.dim_of("mode_b"), "mode_b"), space, "mode_b"),
                       rates.kappa_b, "kappa_b"});
    }
    return out;
}

// --- time grid --------------------------------------------------------------

TimeGrid TimeGrid::linspace(double t_start, double t_end, int samples) {
    if (samples < 2) {
        fail(ErrorCode::config_invalid, "grid needs at least 2 output samples");
    }
    if (!(t_end > t_start)) {
        fail(ErrorCode::config_invalid, "grid needs t_end > t_start");
    }
    TimeGrid g;
    g.t_start = t_start;
    g.t_end = t_end;
    g.output_times.resize(samples);
    for (int i = 0; i < samples; ++i) {
        g.output_times[i] = t_start + (t_end - t_start) * double(i) / double(samples - 1);
    }
    g.output_times.front() = t_start;
    g.output_times.back() = t_end;
    return g;
}

TimeGrid TimeGrid::from_squeezing_target(double r_max, double lambda_abs, int samples) {
    if (!(r_max > 0) || !(lambda_abs > 0)) {
        fail(ErrorCode::config_invalid, "squeezing target needs r_max > 0 and |lambda| > 0");
    }
    return linspace(0.0, r_max / lambda_abs, samples);
}

void TimeGrid::validate() const {
    if (output_times.size() < 2) {
        fail(ErrorCode::config_invalid, "grid needs at least 2 output samples");
    }
    for (size_t i = 1; i < output_times.size(); ++i) {
        if (!(output_times[i] > output_times[i - 1])) {
            fail(ErrorCode::config_invalid, "grid output times must be strictly increasing");
        }
    }
    if (output_times.front() != t_start || output_times.back() != t_end) {
        fail(ErrorCode::config_invalid, "grid output times must span [t_start, t_end]");
    }
    if (safety_factor < 1.0) {
        fail(ErrorCode::config_invalid, "grid safety_factor must be >= 1");
    }
}

StepPlan plan_steps(const TimeDependentOperator& H, const TimeGrid& grid,
                    double extra_rate_scale) {
    grid.validate();
    StepPlan plan;
    double omega = std::max(H.max_coefficient_frequency(), extra_rate_scale);
    if (H.is_constant()) {
        omega = std::max(omega, inf_norm(H.constant_part().mat));
    } else {
        const auto& T = grid.output_times;
        int n = static_cast<int>(T.size());
        int samples = std::min(n, 17);
        for (int i = 0; i < samples; ++i) {
            double t = T[static_cast<size_t>(i) * (n - 1) / std::max(1, samples - 1)];
            omega = std::max(omega, inf_norm(H.materialize(t)));
        }
    }
    plan.omega_max = omega;
    double span = grid.t_end - grid.t_start;
    if (grid.dt_override > 0) {
        plan.dt_target = grid.dt_override;
    } else {
        plan.dt_target = omega > 0 ? 2.0 * std::numbers::pi / (grid.safety_factor * omega)
                                   : span;
    }
    plan.steps.resize(grid.intervals());
    for (int j = 0; j < grid.intervals(); ++j) {
        double len = grid.output_times[j + 1] - grid.output_times[j];
        plan.steps[j] = std::max(1, static_cast<int>(std::ceil(len / plan.dt_target)));
        plan.total_steps += plan.steps[j];
    }
    return plan;
}

// --- shared integration pieces ----------------------------------------------

namespace {

struct Rk4Ws {
    DenseVec k1, k2, k3, k4, tmp;
    explicit Rk4Ws(int dim) : k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim) {}
};

// out = -i H(t) x
inline void schrodinger_rhs(const TimeDependentOperator& H, double t, const DenseVec& x,
                            DenseVec& out) {
    H.apply(t, x, out);
    out *= Complex(0.0, -1.0);
}

void rk4_step(const TimeDependentOperator& H, double t, double dt, DenseVec& psi, Rk4Ws& ws) {
    schrodinger_rhs(H, t, psi, ws.k1);
    ws.tmp = psi + (0.5 * dt) * ws.k1;
    schrodinger_rhs(H, t + 0.5 * dt, ws.tmp, ws.k2);
    ws.tmp = psi + (0.5 * dt) * ws.k2;
    schrodinger_rhs(H, t + 0.5 * dt, ws.tmp, ws.k3);
    ws.tmp = psi + dt * ws.k3;
    schrodinger_rhs(H, t + dt, ws.tmp, ws.k4);
    psi += (dt / 6.0) * (ws.k1 + 2.0 * ws.k2 + 2.0 * ws.k3 + ws.k4);
}

std::vector<std::string> mode_labels_in(const HilbertSpec& space) {
    std::vector<std::string> labels;
    for (const char* l : {"mode_a", "mode_b"}) {
        if (space.has(l)) labels.emplace_back(l);
    }
    return labels;
}

double ket_leak(const KetState& psi, const std::vector<std::string>& labels) {
    double norm2 = psi.amp.squaredNorm();
    if (norm2 <= 0) return 0.0;
    double worst = 0.0;
    for (const auto& l : labels) {
        worst = std::max(worst, top_level_population(psi, l, 2) / norm2);
    }
    return worst;
}

void check_finite(const DenseVec& psi) {
    if (!psi.allFinite()) {
        fail(ErrorCode::integrator_failure, "state amplitudes became non-finite");
    }
}

} // namespace

// --- Schroedinger -----------------------------------------------------------

SchrodingerResult propagate_schrodinger(const TimeDependentOperator& H,
                                        const KetState& psi0, const TimeGrid& grid,
                                        const SchrodingerOptions& opts) {
    if (psi0.space != H.space()) {
        fail(ErrorCode::incompatible_spaces,
             "state " + psi0.space.describe() + " vs operator " + H.space().describe());
    }
    if (std::abs(psi0.norm() - 1.0) > 1e-6) {
        fail(ErrorCode::invalid_state, "initial state must be normalized");
    }
    SchrodingerResult res;
    res.plan = plan_steps(H, grid);
    auto labels = mode_labels_in(H.space());

    DenseVec psi = psi0.amp;
    Rk4Ws ws(H.dim());
    auto record = [&](double t) {
        KetState s{psi0.space, psi};
        res.times.push_back(t);
        res.max_leak = std::max(res.max_leak, ket_leak(s, labels));
        res.states.push_back(std::move(s));
    };
    record(grid.output_times.front());

    for (int j = 0; j < grid.intervals(); ++j) {
        double t0 = grid.output_times[j];
        double dt = (grid.output_times[j + 1] - t0) / res.plan.steps[j];
        for (int q = 0; q < res.plan.steps[j]; ++q) {
            rk4_step(H, t0 + q * dt, dt, psi, ws);
            if (opts.renormalize) {
                double n = psi.norm();
                if (n <= 0 || !std::isfinite(n)) {
                    fail(ErrorCode::integrator_failure, "norm collapsed during propagation");
                }
                res.max_norm_drift = std::max(res.max_norm_drift, std::abs(n - 1.0));
                psi /= n;
            }
        }
        check_finite(psi);
        if (!opts.renormalize) {
            double drift = std::abs(psi.norm() - 1.0);
            res.max_norm_drift = std::max(res.max_norm_drift, drift);
            if (drift > opts.norm_tolerance) {
                char buf[200];
                std::snprintf(buf, sizeof(buf),
                              "norm drift %.3e exceeds %.3e at t=%.6g; raise the grid "
                              "safety_factor (step scale omega_max=%.4g)",
                              drift, opts.norm_tolerance, grid.output_times[j + 1],
                              res.plan.omega_max);
                fail(ErrorCode::step_size_too_large, buf);
            }
        }
        record(grid.output_times[j + 1]);
    }
    if (res.max_leak > opts.leak_warn_threshold) {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "truncation: top-two Fock-level population reached %.3e (threshold %.3e)",
                      res.max_leak, opts.leak_warn_threshold);
        res.warnings.emplace_back(buf);
    }
    return res;
}

// --- Lindblad ---------------------------------------------------------------

namespace {

struct LindbladCtx {
    const TimeDependentOperator* H;
    struct Channel {
        SparseMat c, c_adj, cdc;
        double rate;
    };
    std::vector<Channel> channels;
    DenseMat t1, t2; // scratch

    LindbladCtx(const TimeDependentOperator& h, const std::vector<JumpChannel>& ch)
        : H(&h), t1(h.dim(), h.dim()), t2(h.dim(), h.dim()) {
        for (const auto& jc : ch) {
            Channel c;
            c.c = jc.op.mat;
            c.c_adj = jc.op.mat.adjoint();
            c.cdc = SparseMat(c.c_adj * c.c);
            c.rate = jc.rate;
            channels.push_back(std::move(c));
        }
    }

    // out = -i[H(t), rho] + sum_k rate_k (c rho c^+ - {c^+c, rho}/2)
    void rhs(double t, const DenseMat& rho, DenseMat& out) {
        SparseMat Hs = H->materialize(t);
        t1.noalias() = Hs * rho;
        t2.noalias() = rho * Hs;
        out = Complex(0.0, -1.0) * (t1 - t2);
        for (const auto& c : channels) {
            t1.noalias() = c.c * rho;
            out.noalias() += c.rate * (t1 * c.c_adj);
            t1.noalias() = c.cdc * rho;
            t2.noalias() = rho * c.cdc;
            out.noalias() -= (0.5 * c.rate) * (t1 + t2);
        }
    }
};

} // namespace

LindbladResult propagate_lindblad(const TimeDependentOperator& H,
                                  const DecoherenceRates& rates,
                                  const DensityOperator& rho0, const TimeGrid& grid,
                                  const LindbladOptions& opts) {
    if (rho0.space != H.space()) {
        fail(ErrorCode::incompatible_spaces,
             "state " + rho0.space.describe() + " vs operator " + H.space().describe());
    }
    int d = H.dim();
    if (d > opts.dense_dim_cap) {
        fail(ErrorCode::dimension_too_large,
             "dense density-matrix integration capped at dim " +
                 std::to_string(opts.dense_dim_cap) + ", got " + std::to_string(d) +
                 "; reduce the truncation or use the trajectory solver");
    }
    if (std::abs(rho0.trace_real() - 1.0) > 1e-6 || rho0.hermiticity_defect() > 1e-8) {
        fail(ErrorCode::invalid_state, "initial density operator is not valid");
    }

    LindbladResult res;
    res.plan = plan_steps(H, grid, rates.total());
    auto labels = mode_labels_in(H.space());
    LindbladCtx ctx(H, jump_channels(H.space(), rates));

    DenseMat rho = rho0.rho;
    DenseMat k1(d, d), k2(d, d), k3(d, d), k4(d, d), tmp(d, d);

    auto record = [&](double t) {
        rho = 0.5 * (rho + rho.adjoint()).eval();
        DensityOperator s{rho0.space, rho};
        res.max_trace_dev = std::max(res.max_trace_dev, std::abs(s.trace_real() - 1.0));
        double worst = 0.0;
        for (const auto& l : labels) {
            worst = std::max(worst, top_level_population(s, l, 2));
        }
        res.max_leak = std::max(res.max_leak, worst);
        res.times.push_back(t);
        res.states.push_back(std::move(s));
    };
    record(grid.output_times.front());

    for (int j = 0; j < grid.intervals(); ++j) {
        double t0 = grid.output_times[j];
        double dt = (grid.output_times[j + 1] - t0) / res.plan.steps[j];
        for (int q = 0; q < res.plan.steps[j]; ++q) {
            double t = t0 + q * dt;
            ctx.rhs(t, rho, k1);
            tmp = rho + (0.5 * dt) * k1;
            ctx.rhs(t + 0.5 * dt, tmp, k2);
            tmp = rho + (0.5 * dt) * k2;
            ctx.rhs(t + 0.5 * dt, tmp, k3);
            tmp = rho + dt * k3;
            ctx.rhs(t + dt, tmp, k4);
            rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        if (!rho.allFinite()) {
            fail(ErrorCode::integrator_failure, "density matrix became non-finite");
        }
        record(grid.output_times[j + 1]);
    }
    if (res.max_leak > opts.leak_warn_threshold) {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "truncation: top-two Fock-level population reached %.3e (threshold %.3e)",
                      res.max_leak, opts.leak_warn_threshold);
        res.warnings.emplace_back(buf);
    }
    return res;
}

// --- Monte Carlo wave function ----------------------------------------------

std::uint64_t child_seed(std::uint64_t master_seed, int trajectory_index) {
    // splitmix64 of a golden-ratio walk: decorrelates neighbouring indices and
    // is stable across platforms.
    std::uint64_t z = master_seed + std::uint64_t(trajectory_index) * 0x9E3779B97F4A7C15ULL;
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

namespace {

struct UniformRng {
    std::mt19937_64 eng;
    explicit UniformRng(std::uint64_t seed) : eng(seed) {}
    // 53-bit uniform in [0, 1); bit-stable across platforms.
    double next() { return double(eng() >> 11) * 0x1.0p-53; }
};

// Shared trajectory engine. Holds the non-Hermitian Hamiltonian, the channel
// operators and the fixed step partition; both the naive single-trajectory
// entry point and the ensemble runner drive the same stepping code so their
// floating-point sequences are identical.
class McwfRunner {
public:
    McwfRunner(const TimeDependentOperator& H, const DecoherenceRates& rates,
               const TimeGrid& grid)
        : space_(H.space()),
          channels_(jump_channels(space_, rates)),
          hnh_(make_nonhermitian(H, channels_)),
          grid_(grid),
          plan_(plan_steps(hnh_, grid, rates.total())),
          labels_(mode_labels_in(space_)),
          ws_(H.dim()),
          jump_buf_(H.dim()) {}

    const StepPlan& plan() const { return plan_; }
    const std::vector<JumpChannel>& channels() const { return channels_; }
    const std::vector<std::string>& mode_labels() const { return labels_; }
    const HilbertSpec& space() const { return space_; }

    // Integrate from the start of output interval `start_interval` to the end
    // of the grid. `sink(j, psi)` is called with the unnormalized state at
    // output index j for j in (start_interval, last]. `per_step`, when set, is
    // called after every completed base step (used by the reference pass to
    // record the norm sequence).
    void run(DenseVec& psi, UniformRng& rng, double& u, int start_interval,
             const std::function<void(int, const DenseVec&)>& sink,
             std::vector<JumpEvent>& jumps,
             const std::function<void(const DenseVec&)>& per_step = nullptr) {
        for (int j = start_interval; j < grid_.intervals(); ++j) {
            double t0 = grid_.output_times[j];
            double dt = (grid_.output_times[j + 1] - t0) / plan_.steps[j];
            for (int q = 0; q < plan_.steps[j]; ++q) {
                advance_segment(t0 + q * dt, dt, psi, rng, u, jumps);
                if (per_step) per_step(psi);
            }
            check_finite(psi);
            sink(j + 1, psi);
        }
    }

private:
    static TimeDependentOperator make_nonhermitian(const TimeDependentOperator& H,
                                                   const std::vector<JumpChannel>& ch) {
        if (ch.empty()) {
            TimeDependentOperator out(H.constant_part());
            for (const auto& term : H.terms()) {
                out.add_term(term.op, term.coeff, term.angular_frequency, term.name);
            }
            return out;
        }
        SparseMat acc = H.constant_part().mat;
        for (const auto& c : ch) {
            SparseMat cdc = SparseMat(c.op.mat.adjoint() * c.op.mat);
            acc = acc + SparseMat(Complex(0.0, -0.5 * c.rate) * cdc);
        }
        TimeDependentOperator out(OperatorMatrix{H.space(), std::move(acc), false});
        for (const auto& term : H.terms()) {
            out.add_term(term.op, term.coeff, term.angular_frequency, term.name);
        }
        return out;
    }

    // One base step [t, t+dt], detecting and executing jumps. After a jump the
    // remainder of the segment is advanced recursively so multiple jumps in
    // one step stay correct.
    void advance_segment(double t, double dt, DenseVec& psi, UniformRng& rng, double& u,
                         std::vector<JumpEvent>& jumps) {
        DenseVec pre = psi;
        rk4_step(hnh_, t, dt, psi, ws_);
        if (channels_.empty() || psi.squaredNorm() >= u) return;

        // The norm crossed the threshold inside this step: bisect to dt/16.
        double lo = 0.0, hi = dt;
        DenseVec at_cross = psi;
        for (int it = 0; it < 4; ++it) {
            double mid = 0.5 * (lo + hi);
            DenseVec trial = pre;
            rk4_step(hnh_, t, mid, trial, ws_);
            if (trial.squaredNorm() < u) {
                hi = mid;
                at_cross = trial;
            } else {
                lo = mid;
            }
        }

        // Channel choice proportional to rate * ||c psi||^2.
        double total = 0.0;
        std::vector<double> weights(channels_.size());
        for (size_t k = 0; k < channels_.size(); ++k) {
            jump_buf_.noalias() = channels_[k].op.mat * at_cross;
            weights[k] = channels_[k].rate * jump_buf_.squaredNorm();
            total += weights[k];
        }
        if (total <= 0.0) {
            fail(ErrorCode::integrator_failure,
                 "jump threshold crossed but all jump weights vanish");
        }
        double pick = rng.next() * total;
        size_t chosen = channels_.size() - 1;
        double acc = 0.0;
        for (size_t k = 0; k < channels_.size(); ++k) {
            acc += weights[k];
            if (pick < acc) {
                chosen = k;
                break;
            }
        }
        jump_buf_.noalias() = channels_[chosen].op.mat * at_cross;
        double n = jump_buf_.norm();
        if (n <= 0 || !std::isfinite(n)) {
            fail(ErrorCode::integrator_failure, "jump produced a zero or non-finite state");
        }
        psi = jump_buf_ / n;
        jumps.push_back({t + hi, static_cast<int>(chosen)});
        u = rng.next();

        double rem = dt - hi;
        if (rem > 0) advance_segment(t + hi, rem, psi, rng, u, jumps);
    }

    HilbertSpec space_;
    std::vector<JumpChannel> channels_;
    TimeDependentOperator hnh_;
    TimeGrid grid_;
    StepPlan plan_;
    std::vector<std::string> labels_;
    Rk4Ws ws_;
    DenseVec jump_buf_;
};

void require_normalized(const KetState& psi0, const TimeDependentOperator& H) {
    if (psi0.space != H.space()) {
        fail(ErrorCode::incompatible_spaces,
             "state " + psi0.space.describe() + " vs operator " + H.space().describe());
    }
    if (std::abs(psi0.norm() - 1.0) > 1e-6) {
        fail(ErrorCode::invalid_state, "initial state must be normalized");
    }
}

} // namespace

Trajectory mcwf_trajectory(const TimeDependentOperator& H, const DecoherenceRates& rates,
                           const KetState& psi0, const TimeGrid& grid, std::uint64_t seed) {
    require_normalized(psi0, H);
    McwfRunner runner(H, rates, grid);

    Trajectory traj;
    UniformRng rng(seed);
    double u = runner.channels().empty() ? -1.0 : rng.next();

    DenseVec psi = psi0.amp;
    auto record = [&](int j, const DenseVec& v) {
        KetState s{psi0.space, v};
        double n = s.norm();
        if (n > 0) s.amp /= n;
        traj.times.push_back(grid.output_times[j]);
        traj.max_leak = std::max(traj.max_leak, ket_leak(s, runner.mode_labels()));
        traj.states.push_back(std::move(s));
    };
    record(0, psi);
    runner.run(psi, rng, u, 0, record, traj.jumps);
    return traj;
}

int TrajectoryEnsemble::index_of(const std::string& name) const {
    for (size_t k = 0; k < observable_names.size(); ++k) {
        if (observable_names[k] == name) return static_cast<int>(k);
    }
    fail(ErrorCode::unknown_subsystem, "ensemble has no observable '" + name + "'");
}

Eigen::VectorXcd TrajectoryEnsemble::mean_series(int k) const {
    return values.at(k).colwise().mean();
}

Eigen::VectorXd TrajectoryEnsemble::stderr_series(int k) const {
    const auto& m = values.at(k);
    int n = static_cast<int>(m.rows());
    Eigen::VectorXcd mean = m.colwise().mean();
    Eigen::VectorXd out(m.cols());
    for (int j = 0; j < m.cols(); ++j) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            acc += std::norm(m(i, j) - mean[j]);
        }
        out[j] = n > 1 ? std::sqrt(acc / (double(n) * double(n - 1))) : 0.0;
    }
    return out;
}

TrajectoryEnsemble mcwf_ensemble(const TimeDependentOperator& H,
                                 const DecoherenceRates& rates, const KetState& psi0,
                                 const TimeGrid& grid, int n_traj,
                                 std::uint64_t master_seed,
                                 const std::vector<NamedObservable>& observables) {
    if (n_traj < 2) {
        fail(ErrorCode::config_invalid, "ensemble needs n_traj >= 2");
    }
    require_normalized(psi0, H);
    for (const auto& ob : observables) {
        if (ob.op.space != H.space()) {
            fail(ErrorCode::incompatible_spaces,
                 "observable '" + ob.name + "' lives on " + ob.op.space.describe());
        }
    }
    McwfRunner runner(H, rates, grid);
    int n_out = static_cast<int>(grid.output_times.size());
    int n_obs = static_cast<int>(observables.size());

    TrajectoryEnsemble ens;
    ens.n_traj = n_traj;
    ens.master_seed = master_seed;
    ens.times = grid.output_times;
    ens.jump_counts.assign(n_traj, 0);
    for (const auto& ob : observables) ens.observable_names.push_back(ob.name);
    for (int k = 0; k < n_obs; ++k) {
        ens.values.emplace_back(Eigen::MatrixXcd::Zero(n_traj, n_out));
    }

    // Observable evaluation on the normalized state.
    KetState eval_state{psi0.space, DenseVec(psi0.dim())};
    double leak_high_water = 0.0;
    auto normalize_into_eval = [&](const DenseVec& v) {
        eval_state.amp = v;
        double n = eval_state.norm();
        if (n > 0) eval_state.amp /= n;
        leak_high_water =
            std::max(leak_high_water, ket_leak(eval_state, runner.mode_labels()));
    };

    // Reference pass: evolve once with no jumps, remembering the norm after
    // every step, the state at each output time, and the observable series.
    std::vector<double> norms2;
    norms2.reserve(static_cast<size_t>(runner.plan().total_steps) + 1);
    norms2.push_back(psi0.amp.squaredNorm());
    std::vector<DenseVec> checkpoints(n_out);
    Eigen::MatrixXcd base_obs(n_obs, n_out);

    auto measure_base = [&](const DenseVec& v, int col) {
        normalize_into_eval(v);
        for (int k = 0; k < n_obs; ++k) {
            base_obs(k, col) = expectation(observables[k].op, eval_state);
        }
    };
    {
        DenseVec psi = psi0.amp;
        checkpoints[0] = psi;
        measure_base(psi, 0);
        UniformRng dummy(0);
        // A jump fires when the squared norm drops below the threshold, so a
        // negative threshold can never trigger one.
        double never = -1.0;
        std::vector<JumpEvent> none;
        runner.run(
            psi, dummy, never, 0,
            [&](int j, const DenseVec& v) {
                checkpoints[j] = v;
                measure_base(v, j);
            },
            none, [&](const DenseVec& v) { norms2.push_back(v.squaredNorm()); });
    }

    // Map each global step to its output interval.
    std::vector<int> interval_of_step;
    interval_of_step.reserve(static_cast<size_t>(runner.plan().total_steps));
    for (int j = 0; j < grid.intervals(); ++j) {
        for (int q = 0; q < runner.plan().steps[j]; ++q) interval_of_step.push_back(j);
    }
    long long total_steps = runner.plan().total_steps;

    for (int i = 0; i < n_traj; ++i) {
        UniformRng rng(child_seed(master_seed, i));
        if (runner.channels().empty()) {
            for (int k = 0; k < n_obs; ++k) ens.values[k].row(i) = base_obs.row(k);
            continue;
        }
        double u = rng.next();
        // First crossing of the no-jump norm sequence, in step order (exactly
        // the comparison sequence the naive loop performs).
        long long s = 0;
        while (s < total_steps && norms2[static_cast<size_t>(s) + 1] >= u) ++s;
        if (s == total_steps) {
            for (int k = 0; k < n_obs; ++k) ens.values[k].row(i) = base_obs.row(k);
            continue;
        }
        // This trajectory jumps inside step s: results match the reference up
        // to the start of that output interval, then it walks on its own.
        int j0 = interval_of_step[static_cast<size_t>(s)];
        for (int k = 0; k < n_obs; ++k) {
            ens.values[k].row(i).head(j0 + 1) = base_obs.row(k).head(j0 + 1);
        }
        DenseVec psi = checkpoints[j0];
        std::vector<JumpEvent> jumps;
        runner.run(psi, rng, u, j0,
                   [&](int j, const DenseVec& v) {
                       normalize_into_eval(v);
                       for (int k = 0; k < n_obs; ++k) {
                           ens.values[k](i, j) = expectation(observables[k].op, eval_state);
                       }
                   },
                   jumps);
        ens.jump_counts[i] = static_cast<int>(jumps.size());
        for (const auto& je : jumps) ens.jump_records.push_back({i, je.t, je.channel});
    }
    ens.max_leak = leak_high_water;
    return ens;
}

} // namespace tmsq
