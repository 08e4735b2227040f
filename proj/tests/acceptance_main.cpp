// End-to-end acceptance gates for the squeezing engine. Each criterion prints
// one [PASS]/[FAIL] line with the measured numbers; the process exits nonzero
// if any gate fails. Tolerances are pinned here, next to the checks they guard.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "tmsq/scenarios.hpp"
#include "analytic_references.hpp"

using namespace tmsq;
using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    }
};

int g_failures = 0;

void report(bool ok, const char* label, const std::string& detail, double secs) {
    if (!ok) ++g_failures;
    std::printf("[%s] %s: %s (%.1f s)\n", ok ? "PASS" : "FAIL", label, detail.c_str(),
                secs);
    std::fflush(stdout);
}

std::string fmt(const char* pattern, ...) {
    char buf[512];
    va_list args;
    va_start(args, pattern);
    std::vsnprintf(buf, sizeof(buf), pattern, args);
    va_end(args);
    return buf;
}

const EngineRun& engine_rows(const RunRecord& rec, const std::string& engine) {
    for (const auto& er : rec.engine_runs) {
        if (er.engine == engine) return er;
    }
    std::fprintf(stderr, "engine %s missing from run record\n", engine.c_str());
    std::exit(2);
}

// V(pi/4) of exp(-i H_- t)|00> on an N-per-mode space at the four reference
// squeeze parameters.
std::vector<double> ladder_variances(int n_fock, double lam) {
    HilbertSpec space = HilbertSpec::modes_only(n_fock, n_fock);
    DerivedParams d = derive(ModelParams{});
    TimeDependentOperator H(build_h_minus(d, space));
    TimeGrid grid = TimeGrid::from_squeezing_target(1.5, lam, 7); // r = 0.25 k
    SchrodingerResult res = propagate_schrodinger(H, vacuum_state(space), grid);
    std::vector<double> out;
    for (int idx : {1, 2, 4, 6}) out.push_back(epr_variance(res.states[idx], kPi / 4));
    return out;
}

// --- criterion 1: the pair Hamiltonian reproduces V = 2 e^{-2r} -------------

void criterion_1() {
    Timer t;
    const double lam = std::abs(derive(ModelParams{}).lambda); // g/40 working point
    std::vector<double> v30 = ladder_variances(30, lam);
    std::vector<double> v70 = ladder_variances(70, lam);

    // The propagator must match the exact evolution on the truncated space...
    double solver_dev = 0.0;
    for (int k = 0; k < 4; ++k) {
        solver_dev = std::max(solver_dev, std::abs(v30[k] - refs::kTruncatedV30[k]));
    }
    // ...and the truncated evolution must match the closed form wherever the
    // state fits the truncation: every r at 70 levels, r <= 1 at 30 levels.
    // (At 30 levels the r = 1.5 state spills past the cutoff; the exact
    // truncated value sits ~0.49 above 2 e^{-2r} no matter the propagator.)
    double law_dev = 0.0;
    for (int k = 0; k < 4; ++k) {
        law_dev = std::max(law_dev, std::abs(v70[k] - refs::ideal_v_min(refs::kLadderR[k])));
    }
    for (int k = 0; k < 3; ++k) {
        law_dev = std::max(law_dev, std::abs(v30[k] - refs::ideal_v_min(refs::kLadderR[k])));
    }

    bool ok = solver_dev <= 1.0e-4 && law_dev <= 1.0e-3;
    report(ok, "criterion 1",
           fmt("V(pi/4) vs 2e^{-2r} within %.2e for r<=1 @N=30 and all r @N=70 "
               "(tol 1e-3); solver vs exact truncated evolution within %.2e (tol "
               "1e-4); N=30 r=1.5 measured %.4f vs ideal %.4f, a truncation "
               "artifact of the 30-level space",
               law_dev, solver_dev, v30[3], refs::ideal_v_min(1.5)),
           t.seconds());
}

// --- criteria 2 + 8: the lossy working point, and bytewise reproducibility --

std::string criterion_2() {
    Timer t;
    ScenarioConfig cfg = parse_config(builtin_scenarios().at("fig3d"));
    RunRecord rec = run_scenario(cfg);
    const EngineRun& mc = engine_rows(rec, "mcwf_vi");

    double best = 1e300, r_at = 0.0;
    for (const auto& row : mc.rows) {
        if (row.v_ar < best) {
            best = row.v_ar;
            r_at = row.r;
        }
    }
    // The headline band applies at the operating point r = 1.5 (the canned
    // run's horizon), not to the grid minimum: per-row axis optimization and
    // converged sampling push the dip itself a few percent below a
    // fixed-axis readout at the same truncation, so gating the minimum would
    // penalize the more converged simulation.
    const SqueezingRecord& end = mc.rows.back();
    const double lo = 0.178 * 0.85, hi = 0.178 * 1.15;
    bool ok = cfg.n_traj >= 600 && end.r >= 1.5 - 1e-9 && end.v_ar >= lo &&
              end.v_ar <= hi && squeezing_db(best) >= 9.8 && r_at >= 1.2;
    report(ok, "criterion 2",
           fmt("fig3d (%d trajectories) V_ar(r=1.5) = %.4f +/- %.4f (%.2f dB), gate "
               "[%.4f, %.4f]; dip %.4f (%.2f dB, floor 9.8 dB) at r = %.2f",
               cfg.n_traj, end.v_ar, end.v_ar_stderr, squeezing_db(end.v_ar), lo, hi,
               best, squeezing_db(best), r_at),
           t.seconds());
    return csv_text(rec);
}

void criterion_8(const std::string& first_csv) {
    Timer t;
    ScenarioConfig cfg = parse_config(builtin_scenarios().at("fig3d"));
    std::string second = csv_text(run_scenario(cfg));
    bool ok = second == first_csv;
    report(ok, "criterion 8",
           fmt("repeated fig3d run with the same master seed is byte-identical: "
               "%zu vs %zu bytes, %s",
               first_csv.size(), second.size(), ok ? "equal" : "DIFFERENT"),
           t.seconds());
}

// --- criterion 3: reduced decoherence pushes past 12 dB ---------------------

void criterion_3() {
    Timer t;
    ScenarioConfig cfg = parse_config(builtin_scenarios().at("fig3d_improved"));
    RunRecord rec = run_scenario(cfg);
    const EngineRun& mc = engine_rows(rec, "mcwf_vi");
    const SqueezingRecord& last = mc.rows.back();
    bool ok = std::abs(last.r - 1.5) < 1e-9 && last.v_ar <= 0.126;
    report(ok, "criterion 3",
           fmt("fig3d_improved V_ar(r=1.5) = %.4f +/- %.4f (%.2f dB); gate <= "
               "0.126 (>= 12 dB)",
               last.v_ar, last.v_ar_stderr, squeezing_db(last.v_ar)),
           t.seconds());
}

// --- criterion 4: weaker pair coupling tracks the ideal law more closely ----

void criterion_4() {
    Timer t;
    json weak; // eta = 10 g: pair coupling g/40
    weak["name"] = "c4_weak";
    weak["engine"] = "schrodinger_vi";
    weak["truncation"] = {{"N_a", 40}, {"N_b", 40}};
    weak["grid"] = {{"r_max", 1.5}, {"samples", 31}};

    json strong = weak; // eta = 5 g: pair coupling g/20
    strong["name"] = "c4_strong";
    strong["model"] = {{"Delta", 35.0}, {"Omega", 20.0}};
    strong["grid"] = {{"r_max", 1.0}, {"samples", 21}};

    RunRecord rw = run_scenario(parse_config(weak));
    RunRecord rs = run_scenario(parse_config(strong));
    const auto& rows_w = engine_rows(rw, "schrodinger_vi").rows;
    const auto& rows_s = engine_rows(rs, "schrodinger_vi").rows;

    const double ideal = refs::ideal_v_min(1.0);
    const SqueezingRecord& w1 = rows_w[20]; // r grid is 0.05 k in both runs
    const SqueezingRecord& s1 = rows_s[20];
    double dev_weak = std::abs(w1.v_ar - ideal);
    double dev_strong = std::abs(s1.v_ar - ideal);
    bool ok = std::abs(w1.r - 1.0) < 1e-9 && std::abs(s1.r - 1.0) < 1e-9 &&
              dev_weak < dev_strong;

    // Entanglement window: once squeezing develops, the full interaction keeps
    // the witness below the separability threshold all the way to r = 1.5.
    int checked = 0;
    bool window_ok = true;
    for (const auto& row : rows_w) {
        if (row.r < 0.2 - 1e-9) continue;
        ++checked;
        window_ok = window_ok && row.v_ar < 2.0 && row.entangled;
    }
    ok = ok && window_ok && checked == 27;

    report(ok, "criterion 4",
           fmt("at r = 1.0, |V - 2e^{-2}| = %.4f for lambda = g/40 vs %.4f for "
               "lambda = g/20 (weaker coupling closer); V_ar < 2 and entangled in "
               "all %d outputs with r >= 0.2",
               dev_weak, dev_strong, checked),
           t.seconds());
}

// --- criterion 5: lab-frame and interaction-picture engines agree -----------

void criterion_5() {
    Timer t;
    json j;
    j["name"] = "c5";
    j["engines"] = {"schrodinger_full", "schrodinger_vi"};
    j["truncation"] = {{"N_a", 12}, {"N_b", 12}};
    j["engine_overrides"] = {
        {"schrodinger_full",
         {{"truncation", {{"N_a", 12}, {"N_b", 12}, {"qubit_levels", 3}}}}}};
    j["grid"] = {{"r_max", 0.4}, {"samples", 5}};
    RunRecord rec = run_scenario(parse_config(j));
    const auto& full = engine_rows(rec, "schrodinger_full").rows;
    const auto& vi = engine_rows(rec, "schrodinger_vi").rows;

    double worst = 0.0;
    for (size_t i = 0; i < full.size(); ++i) {
        worst = std::max(worst, std::abs(full[i].v_ar - vi[i].v_ar));
    }
    bool ok = full.size() == vi.size() && worst <= 0.05;
    report(ok, "criterion 5",
           fmt("three-level lab frame vs interaction picture at N=12, r <= 0.4: "
               "max |dV| = %.4f (tol 0.05)",
               worst),
           t.seconds());
}

// --- criterion 6: trajectories average to the master equation ---------------

void criterion_6() {
    Timer t;
    json j;
    j["name"] = "c6";
    j["engine"] = "mcwf_vi";
    j["truncation"] = {{"N_a", 6}, {"N_b", 6}};
    j["grid"] = {{"r_max", 0.5}, {"samples", 6}};
    j["rates"] = {{"units", "g"}, {"gamma", 0.05}, {"gamma_ph", 0.03},
                  {"kappa_a", 0.02}, {"kappa_b", 0.02}};
    j["mcwf"] = {{"n_traj", 400}, {"master_seed", 31415}};
    ScenarioConfig cfg = parse_config(j);
    RunRecord rec = run_scenario(cfg);
    const auto& mc = engine_rows(rec, "mcwf_vi").rows;

    // Independent master-equation reference on the identical grid.
    DerivedParams d = derive(cfg.model);
    HilbertSpec space = HilbertSpec::qubit_modes(2, 6, 6);
    TimeDependentOperator H = build_v_i(cfg.model, d, space);
    DecoherenceRates rates{0.05, 0.03, 0.02, 0.02};
    TimeGrid grid = TimeGrid::from_squeezing_target(0.5, std::abs(d.lambda), 6);
    grid.safety_factor = 160.0;
    KetState psi0 = build_initial_state(space, cfg.initial_state);
    LindbladResult lb = propagate_lindblad(H, rates, density_from_ket(psi0), grid);

    double worst_sigma = 0.0, min_eig = 0.0;
    bool within = true;
    for (size_t i = 0; i < mc.size(); ++i) {
        double v_l = epr_variance(lb.states[i], mc[i].theta);
        double diff = std::abs(v_l - mc[i].v_ar);
        double gate = 3.0 * mc[i].v_ar_stderr + 1e-9;
        within = within && diff <= gate;
        if (mc[i].v_ar_stderr > 0) {
            worst_sigma = std::max(worst_sigma, diff / mc[i].v_ar_stderr);
        }
        min_eig = std::min(min_eig, lb.states[i].min_eigenvalue());
    }
    bool ok = within && mc.size() == lb.states.size() &&
              lb.max_trace_dev <= 1e-8 && min_eig >= -1e-6;
    report(ok, "criterion 6",
           fmt("all four dissipators at N=6, 400 trajectories vs master equation: "
               "worst deviation %.2f sigma (gate 3); trace drift %.1e (tol 1e-8); "
               "min eigenvalue %.1e (tol -1e-6)",
               worst_sigma, lb.max_trace_dev, min_eig),
           t.seconds());
}

// --- criterion 7: dissipation against closed forms --------------------------

OperatorMatrix zero_op(const HilbertSpec& space) {
    return OperatorMatrix{space, SparseMat(space.total_dim(), space.total_dim()), true};
}

void criterion_7() {
    Timer t;
    double worst = 0.0; // deterministic channels, absolute deviation

    { // cavity damping: <n>(t) = n0 e^{-kappa t}
        HilbertSpec space = HilbertSpec::modes_only(8, 2);
        TimeDependentOperator H(zero_op(space));
        DecoherenceRates rates{0.0, 0.0, 0.2, 0.0};
        TimeGrid grid = TimeGrid::linspace(0.0, 10.0, 6);
        grid.dt_override = 0.02;
        DensityOperator rho0 = density_from_ket(basis_state(space, {3, 0}));
        LindbladResult res = propagate_lindblad(H, rates, rho0, grid);
        OperatorMatrix a = embed(annihilation_op(8), space, "mode_a");
        OperatorMatrix n = adjoint(a) * a;
        n.hermitian_hint = true;
        for (size_t i = 0; i < res.states.size(); ++i) {
            double got = expectation(n, res.states[i]).real();
            double want = refs::damped_mean_photons(3.0, 0.2, res.times[i]);
            worst = std::max(worst, std::abs(got - want));
        }
    }
    { // qubit decay and pure dephasing on a bare qubit
        HilbertSpec space = HilbertSpec::single("qubit", 2);
        TimeDependentOperator H(zero_op(space));
        TimeGrid grid = TimeGrid::linspace(0.0, 3.0, 7);
        grid.dt_override = 0.01;

        DecoherenceRates decay{0.25, 0.0, 0.0, 0.0};
        LindbladResult r1 =
            propagate_lindblad(H, decay, density_from_ket(basis_state(space, {1})), grid);
        for (size_t i = 0; i < r1.states.size(); ++i) {
            double got = r1.states[i].rho(1, 1).real();
            worst = std::max(
                worst, std::abs(got - refs::excited_survival(0.25, r1.times[i])));
        }

        KetState plus{space, DenseVec(2)};
        plus.amp << Complex(1.0, 0.0), Complex(1.0, 0.0);
        plus.normalize();
        DecoherenceRates deph{0.0, 0.3, 0.0, 0.0};
        LindbladResult r2 = propagate_lindblad(H, deph, density_from_ket(plus), grid);
        for (size_t i = 0; i < r2.states.size(); ++i) {
            double got = std::abs(r2.states[i].rho(0, 1));
            worst = std::max(
                worst, std::abs(got - refs::dephased_coherence(0.3, r2.times[i])));
            worst = std::max(worst, std::abs(r2.states[i].rho(1, 1).real() - 0.5));
        }
    }

    // Stochastic side: the fraction of trajectories that never jump equals the
    // no-jump norm e^{-gamma t}, and the ensemble mean tracks the decay curve.
    HilbertSpec space = HilbertSpec::single("qubit", 2);
    TimeDependentOperator H(zero_op(space));
    DecoherenceRates rates{0.2, 0.0, 0.0, 0.0};
    TimeGrid grid = TimeGrid::linspace(0.0, 2.0, 3);
    grid.dt_override = 0.01;
    std::vector<NamedObservable> obs;
    obs.push_back({"p_e", embed(atom_op(2, AtomOp::sigma_ee), space, "qubit")});
    TrajectoryEnsemble ens =
        mcwf_ensemble(H, rates, basis_state(space, {1}), grid, 600, 271828u, obs);
    int never = 0;
    for (int c : ens.jump_counts) never += (c == 0);
    double frac = double(never) / double(ens.n_traj);
    double p = std::exp(-0.2 * 2.0);
    double sigma = std::sqrt(p * (1.0 - p) / double(ens.n_traj));
    double pull = std::abs(frac - p) / sigma;

    Eigen::VectorXcd mean = ens.mean_series(ens.index_of("p_e"));
    Eigen::VectorXd err = ens.stderr_series(ens.index_of("p_e"));
    bool mean_ok = true;
    for (int i = 0; i < mean.size(); ++i) {
        mean_ok = mean_ok && std::abs(mean[i].real() -
                                      refs::excited_survival(0.2, ens.times[i])) <=
                                 3.0 * err[i] + 1e-9;
    }

    bool ok = worst <= 1e-6 && pull <= 3.0 && mean_ok;
    report(ok, "criterion 7",
           fmt("closed-form dissipation: max deterministic deviation %.1e (tol "
               "1e-6); no-jump fraction %.3f vs e^{-0.4} = %.3f (%.1f sigma, gate "
               "3); ensemble mean within 3 sigma: %s",
               worst, frac, p, pull, mean_ok ? "yes" : "no"),
           t.seconds());
}

// --- invariant: the strong-drive working point trips the regime screen ------

void regime_guard() {
    Timer t;
    ScenarioConfig cfg = parse_config(builtin_scenarios().at("fig2c"));
    RegimeReport rep = validate_regime(cfg.model, derive(cfg.model));
    int failing = 0;
    for (const auto& c : rep.checks) failing += !c.pass;
    bool ok = !rep.all_pass && !rep.warnings.empty() && failing >= 1;
    report(ok, "regime guard",
           fmt("fig2c (lambda = g/80) flags %d failing separation check(s); first "
               "warning: %s",
               failing, rep.warnings.empty() ? "<none>" : rep.warnings[0].c_str()),
           t.seconds());
}

} // namespace

int main() {
    Timer total;
    std::printf("acceptance gates, engine version %s\n", kVersion);

    criterion_1();
    std::string fig3d_csv = criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8(fig3d_csv);
    regime_guard();

    std::printf("%s: %d criterion(s) failed (total %.1f s)\n",
                g_failures == 0 ? "ALL PASS" : "FAILURES", g_failures, total.seconds());
    return g_failures == 0 ? 0 : 1;
}
