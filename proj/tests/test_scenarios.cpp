#include <catch2/catch.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "tmsq/scenarios.hpp"
#include "analytic_references.hpp"

using namespace tmsq;
using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

constexpr const char* kHeader =
    "engine,r,t_in_inv_g,V_ar,V_ar_stderr,dB,theta,theta_opt,V_ar_min,n_a,n_b,"
    "leak_a,leak_b,entangled";

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
    try {
        fn();
    } catch (const SimError& e) {
        return e.code();
    }
    FAIL("expected a SimError");
    return ErrorCode::invalid_state;
}

json small_base() {
    json j;
    j["name"] = "t";
    j["engine"] = "schrodinger_hminus";
    j["truncation"] = {{"N_a", 8}, {"N_b", 8}};
    j["grid"] = {{"r_max", 0.5}, {"samples", 3}};
    return j;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) out.push_back(line);
    return out;
}

double min_v_ar(const RunRecord& rec) {
    double best = 1e300;
    for (const auto& er : rec.engine_runs)
        for (const auto& row : er.rows) best = std::min(best, row.v_ar);
    return best;
}

} // namespace

TEST_CASE("engine names round-trip") {
    for (Engine e : {Engine::schrodinger_full, Engine::schrodinger_vi,
                     Engine::schrodinger_hminus, Engine::lindblad_vi, Engine::mcwf_vi}) {
        REQUIRE(engine_from_name(engine_name(e)) == e);
    }
    REQUIRE(code_of([] { engine_from_name("euler"); }) == ErrorCode::config_invalid);
}

TEST_CASE("the canned catalog parses and matches its published parameters") {
    auto cat = builtin_scenarios();
    std::vector<std::string> names;
    for (const auto& [name, j] : cat) names.push_back(name);
    REQUIRE(names == std::vector<std::string>{"fig2a", "fig2b", "fig2c", "fig3a",
                                              "fig3b", "fig3c", "fig3d",
                                              "fig3d_improved"});
    for (const auto& [name, j] : cat) {
        ScenarioConfig cfg = parse_config(j);
        REQUIRE(cfg.name == name);
    }

    ScenarioConfig b = parse_config(cat.at("fig2b"));
    REQUIRE(b.engines.size() == 3);
    REQUIRE(b.model.Delta == 90.0);
    REQUIRE(b.model.Omega.real() == 50.0);
    REQUIRE(derive(b.model).lambda.real() == Approx(1.0 / 40.0));
    // The lab-frame engine carries its own third-level truncation.
    const EngineOverride& ov = b.engine_overrides.at("schrodinger_full");
    REQUIRE(ov.has_truncation);
    REQUIRE(ov.truncation.qubit_levels == 3);
    REQUIRE(ov.has_grid);

    ScenarioConfig a = parse_config(cat.at("fig2a"));
    ScenarioConfig c = parse_config(cat.at("fig2c"));
    REQUIRE(derive(a.model).lambda.real() == Approx(1.0 / 20.0));
    REQUIRE(derive(c.model).lambda.real() == Approx(1.0 / 80.0));

    ScenarioConfig d = parse_config(cat.at("fig3d"));
    REQUIRE(d.rates.units == "lambda");
    REQUIRE(d.rates.gamma == Approx(5.2e-3));
    REQUIRE(d.rates.gamma_ph == Approx(1.0e-3));
    REQUIRE(d.rates.kappa_a == Approx(1.0e-4));
    REQUIRE(d.n_traj >= 600);

    ScenarioConfig di = parse_config(cat.at("fig3d_improved"));
    REQUIRE(di.rates.gamma == Approx(5.2e-4));
    REQUIRE(di.rates.gamma_ph == Approx(1.0e-4));
    REQUIRE(di.truncation.N_a >= d.truncation.N_a);
}

TEST_CASE("parameter-regime screening accepts the working points and flags the strong drive") {
    auto cat = builtin_scenarios();
    for (const auto& [name, j] : cat) {
        ScenarioConfig cfg = parse_config(j);
        RegimeReport rep = validate_regime(cfg.model, derive(cfg.model));
        if (name == "fig2c") {
            REQUIRE_FALSE(rep.all_pass);
            REQUIRE_FALSE(rep.warnings.empty());
            int failing = 0;
            for (const auto& c : rep.checks) {
                if (c.pass) continue;
                ++failing;
                // The drive-strength separation is the one that breaks first:
                // (omega_0 + omega_d) / (2 Omega) = 1000/200 sits exactly on
                // the strict threshold.
                REQUIRE(c.name == "drive_rwa");
                REQUIRE(c.ratio == Approx(5.0));
                REQUIRE(c.strict);
            }
            REQUIRE(failing == 1);
        } else {
            INFO(name);
            REQUIRE(rep.all_pass);
            REQUIRE(rep.warnings.empty());
        }
    }
}

TEST_CASE("config validation rejects malformed inputs") {
    auto expect_invalid = [](json j) {
        REQUIRE(code_of([&] { parse_config(j); }) == ErrorCode::config_invalid);
    };

    json ok = small_base();
    REQUIRE_NOTHROW(parse_config(ok));

    { json j = ok; j["frobnicate"] = 1; expect_invalid(j); }
    { json j = ok; j["model"] = {{"coupling", 1.0}}; expect_invalid(j); }
    { json j = ok; j["engines"] = {"schrodinger_vi"}; expect_invalid(j); } // engine too
    { json j = ok; j.erase("engine"); expect_invalid(j); }
    { json j = ok; j["engine"] = "euler"; expect_invalid(j); }
    { json j = ok; j.erase("engine"); j["engines"] = json::array(); expect_invalid(j); }
    { json j = ok; j["rates"] = {{"units", "hz"}}; expect_invalid(j); }
    { json j = ok; j["rates"] = {{"gamma", -0.1}}; expect_invalid(j); }
    { json j = ok; j["grid"] = {{"r_max", 0.0}, {"samples", 3}}; expect_invalid(j); }
    { json j = ok; j["grid"] = {{"r_max", 0.5}, {"samples", 1}}; expect_invalid(j); }
    { json j = ok; j["truncation"] = {{"N_a", 1}}; expect_invalid(j); }
    { json j = ok; j["truncation"] = {{"qubit_levels", 4}}; expect_invalid(j); }
    { json j = ok; j["observables"] = {{"theta", "sideways"}}; expect_invalid(j); }
    { json j = ok; j["observables"] = {{"theta", true}}; expect_invalid(j); }
    { json j = ok; j["initial_state"] = {{"qubit", "x"}}; expect_invalid(j); }
    { json j = ok; j["initial_state"] = {{"mode_a", {{"type", "fock"}, {"n", -1}}}}; expect_invalid(j); }
    { json j = ok; j["initial_state"] = {{"mode_a", {{"type", "coherent"}, {"alpha", {1, 2, 3}}}}}; expect_invalid(j); }
    { json j = ok; j["engine_overrides"] = {{"euler", json::object()}}; expect_invalid(j); }
    { json j = ok; j["engine_overrides"] = {{"schrodinger_vi", {{"tolerance", 1}}}}; expect_invalid(j); }
    { json j = ok; j["mcwf"] = {{"master_seed", -3}}; expect_invalid(j); }

    { // the trajectory engine needs an ensemble
        json j = ok;
        j["engine"] = "mcwf_vi";
        j["mcwf"] = {{"n_traj", 1}};
        expect_invalid(j);
    }
    { // the lab-frame engine needs the third level
        json j = ok;
        j["engine"] = "schrodinger_full";
        expect_invalid(j);
    }
    { // ...which an override can supply
        json j = ok;
        j["engine"] = "schrodinger_full";
        j["engine_overrides"] = {
            {"schrodinger_full",
             {{"truncation", {{"N_a", 6}, {"N_b", 6}, {"qubit_levels", 3}}}}}};
        REQUIRE_NOTHROW(parse_config(j));
    }
    { // model must derive cleanly at parse time
        json j = ok;
        j["model"] = {{"Delta", 100.0}, {"Omega", 50.0}};
        REQUIRE(code_of([&] { parse_config(j); }) == ErrorCode::degenerate_detuning);
    }
}

TEST_CASE("the echoed config is normalized and parses back to itself") {
    json j = small_base();
    j["observables"] = {{"theta", 0.6}};
    j["initial_state"] = {{"qubit", "g"},
                          {"mode_b", {{"type", "coherent"}, {"alpha", {0.3, -0.2}}}}};
    j["mcwf"] = {{"n_traj", 16}, {"master_seed", 99}};

    ScenarioConfig c1 = parse_config(j);
    REQUIRE(c1.echo.contains("engines")); // singular form is normalized away
    REQUIRE_FALSE(c1.echo.contains("engine"));
    REQUIRE(c1.echo.at("mcwf").at("master_seed").get<std::uint64_t>() == 99u);

    ScenarioConfig c2 = parse_config(c1.echo);
    REQUIRE(c2.echo.dump() == c1.echo.dump());
    REQUIRE(c2.theta.mode == ThetaPolicy::Mode::fixed);
    REQUIRE(c2.theta.fixed_value == 0.6);
    REQUIRE(c2.initial_state.mode_b.kind == ModeStateSpec::Kind::coherent);
    REQUIRE(c2.initial_state.mode_b.alpha == Complex(0.3, -0.2));
}

TEST_CASE("rate units scale into simulation frequency units") {
    ModelParams p; // lambda = 1/40
    DerivedParams d = derive(p);

    RateSpec lam{"lambda", 1.0e-3, 0.0, 2.0, 0.0};
    DecoherenceRates r1 = resolve_rates(lam, d, 2.0e7);
    REQUIRE(r1.gamma == Approx(1.0e-3 / 40.0).epsilon(1e-14));
    REQUIRE(r1.kappa_a == Approx(2.0 / 40.0).epsilon(1e-14));

    RateSpec ing{"g", 0.3, 0.1, 0.0, 0.0};
    DecoherenceRates r2 = resolve_rates(ing, d, 2.0e7);
    REQUIRE(r2.gamma == 0.3);
    REQUIRE(r2.gamma_ph == 0.1);

    // SI rates divide out the coupling expressed in angular-frequency units.
    RateSpec si{"si", 1.0e5, 0.0, 0.0, 0.0};
    DecoherenceRates r3 = resolve_rates(si, d, 2.0e7);
    REQUIRE(r3.gamma == Approx(1.0e5 / (2.0 * kPi * 2.0e7)).epsilon(1e-14));

    RateSpec bad{"hz", 1.0, 0.0, 0.0, 0.0};
    REQUIRE(code_of([&] { resolve_rates(bad, d, 2.0e7); }) == ErrorCode::config_invalid);
}

TEST_CASE("initial states assemble as tensor products") {
    HilbertSpec space = HilbertSpec::qubit_modes(2, 6, 5);
    const double s = 1.0 / std::sqrt(2.0);

    InitialStateSpec def; // minus x vacuum x vacuum
    KetState psi = build_initial_state(space, def);
    REQUIRE(std::abs(psi.norm() - 1.0) < 1e-12);
    REQUIRE(std::abs(psi.amp[space.flat_index({0, 0, 0})] - s) < 1e-12);
    REQUIRE(std::abs(psi.amp[space.flat_index({1, 0, 0})] + s) < 1e-12);

    InitialStateSpec st;
    st.qubit.kind = QubitStateSpec::Kind::plus;
    REQUIRE(std::abs(build_initial_state(space, st).amp[space.flat_index({1, 0, 0})] - s) <
            1e-12);
    st.qubit.kind = QubitStateSpec::Kind::excited;
    st.mode_a.kind = ModeStateSpec::Kind::fock;
    st.mode_a.n = 3;
    KetState f = build_initial_state(space, st);
    REQUIRE(std::abs(f.amp[space.flat_index({1, 3, 0})] - 1.0) < 1e-12);

    st.qubit.kind = QubitStateSpec::Kind::amplitudes;
    st.qubit.amp = {Complex(1.0, 0.0), Complex(0.0, 1.0)}; // unnormalized is fine
    st.mode_a = {};
    KetState amps = build_initial_state(space, st);
    REQUIRE(std::abs(amps.amp[space.flat_index({0, 0, 0})] - Complex(s, 0.0)) < 1e-12);
    REQUIRE(std::abs(amps.amp[space.flat_index({1, 0, 0})] - Complex(0.0, s)) < 1e-12);

    InitialStateSpec coh;
    coh.qubit.kind = QubitStateSpec::Kind::ground;
    coh.mode_b.kind = ModeStateSpec::Kind::coherent;
    coh.mode_b.alpha = Complex(0.5, 0.25);
    KetState cs = build_initial_state(space, coh);
    REQUIRE(std::abs(cs.norm() - 1.0) < 1e-12);
    Complex c0 = cs.amp[space.flat_index({0, 0, 0})];
    Complex c1 = cs.amp[space.flat_index({0, 0, 1})];
    Complex c2 = cs.amp[space.flat_index({0, 0, 2})];
    REQUIRE(std::abs(c1 / c0 - coh.mode_b.alpha) < 1e-12);
    REQUIRE(std::abs(c2 / c1 - coh.mode_b.alpha / std::sqrt(2.0)) < 1e-12);

    InitialStateSpec toobig;
    toobig.mode_a.kind = ModeStateSpec::Kind::fock;
    toobig.mode_a.n = 7;
    REQUIRE(code_of([&] { build_initial_state(space, toobig); }) ==
            ErrorCode::config_invalid);

    // A pure two-mode space just ignores the qubit slot.
    HilbertSpec modes = HilbertSpec::modes_only(4, 4);
    KetState m = build_initial_state(modes, def);
    REQUIRE(std::abs(m.amp[0] - 1.0) < 1e-12);
}

TEST_CASE("a pair-Hamiltonian run reproduces the closed-form squeezing curve") {
    json j;
    j["name"] = "ladder";
    j["engine"] = "schrodinger_hminus";
    j["truncation"] = {{"N_a", 30}, {"N_b", 30}};
    j["grid"] = {{"r_max", 1.0}, {"samples", 6}};
    ScenarioConfig cfg = parse_config(j);
    RunRecord rec = run_scenario(cfg);

    REQUIRE(rec.version == std::string(kVersion));
    REQUIRE(rec.regime.all_pass);
    REQUIRE(rec.warnings.empty());
    REQUIRE(rec.engine_runs.size() == 1);
    const auto& rows = rec.engine_runs[0].rows;
    REQUIRE(rows.size() == 6);

    double lam = std::abs(derive(cfg.model).lambda);
    for (size_t i = 0; i < rows.size(); ++i) {
        double r = 0.2 * double(i);
        REQUIRE(rows[i].r == Approx(r).margin(1e-12));
        REQUIRE(rows[i].r == Approx(lam * rows[i].t).margin(1e-12));
        REQUIRE(rows[i].theta == Approx(kPi / 4)); // configured axis, not a scan
        REQUIRE(rows[i].v_ar == Approx(2.0 * std::exp(-2.0 * r)).margin(1e-3));
        REQUIRE(rows[i].db == Approx(squeezing_db(rows[i].v_ar)).margin(1e-12));
        REQUIRE(rows[i].v_ar_min <= rows[i].v_ar + 1e-12);
        REQUIRE(rows[i].v_ar_stderr < 0); // deterministic engine
        REQUIRE(rows[i].entangled == (i > 0));
    }

    json summary = summary_json(cfg, rec);
    REQUIRE(summary.at("name") == "ladder");
    REQUIRE(summary.at("regime").at("all_pass") == true);
    const json& per = summary.at("results").at("per_engine").at("schrodinger_hminus");
    REQUIRE(per.at("min_v_ar").get<double>() == Approx(rows.back().v_ar));
    REQUIRE(per.at("r_at_min").get<double>() == Approx(1.0).margin(1e-12));

    // Identical configs give identical bytes, including the fixed header.
    std::string csv = csv_text(rec);
    auto ls = lines_of(csv);
    REQUIRE(ls.size() == 7);
    REQUIRE(ls[0] == kHeader);
    REQUIRE(ls[1] == "schrodinger_hminus,0,0,2,,0,0.785398163397,0,2,0,0,0,0,0");
    REQUIRE(csv_text(run_scenario(cfg)) == csv);
}

TEST_CASE("scenario output lands on disk when a directory is configured") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() /
                   ("tmsq_test_out_" + std::to_string(::getpid()));
    json j;
    j["name"] = "filecheck";
    j["engine"] = "schrodinger_hminus";
    j["truncation"] = {{"N_a", 10}, {"N_b", 10}};
    j["grid"] = {{"r_max", 0.4}, {"samples", 3}};
    j["output"] = {{"dir", dir.string()}};
    ScenarioConfig cfg = parse_config(j);
    RunRecord rec = run_scenario(cfg);

    std::ifstream csv(dir / "filecheck.csv", std::ios::binary);
    REQUIRE(csv.good());
    std::stringstream buf;
    buf << csv.rdbuf();
    REQUIRE(buf.str() == csv_text(rec));

    std::ifstream sum(dir / "filecheck_summary.json");
    REQUIRE(sum.good());
    json parsed = json::parse(sum);
    REQUIRE(parsed.at("results").contains("min_v_ar"));
    fs::remove_all(dir);
}

TEST_CASE("the master-equation engine with zero rates tracks the pure-state engine") {
    json j;
    j["name"] = "closed";
    j["engines"] = {"schrodinger_vi", "lindblad_vi"};
    j["truncation"] = {{"N_a", 4}, {"N_b", 4}};
    j["grid"] = {{"r_max", 0.3}, {"samples", 4}};
    ScenarioConfig cfg = parse_config(j);
    RunRecord rec = run_scenario(cfg);
    REQUIRE(rec.engine_runs.size() == 2);
    const auto& pure = rec.engine_runs[0].rows;
    const auto& mixed = rec.engine_runs[1].rows;
    REQUIRE(pure.size() == mixed.size());
    for (size_t i = 0; i < pure.size(); ++i) {
        REQUIRE(mixed[i].v_ar == Approx(pure[i].v_ar).margin(1e-6));
        REQUIRE(mixed[i].v_ar_min == Approx(pure[i].v_ar_min).margin(1e-6));
    }
}

TEST_CASE("trajectory runs report uncertainties and reproduce per seed") {
    json j;
    j["name"] = "traj";
    j["engine"] = "mcwf_vi";
    j["truncation"] = {{"N_a", 4}, {"N_b", 4}};
    j["grid"] = {{"r_max", 0.2}, {"samples", 3}};
    j["rates"] = {{"units", "g"}, {"gamma", 0.1}, {"kappa_a", 0.05}};
    j["mcwf"] = {{"n_traj", 24}, {"master_seed", 4242}};
    ScenarioConfig cfg = parse_config(j);
    RunRecord rec = run_scenario(cfg);
    for (const auto& row : rec.engine_runs[0].rows) {
        REQUIRE(row.v_ar_stderr >= 0.0);
    }
    REQUIRE(csv_text(run_scenario(cfg)) == csv_text(rec));

    json j2 = j;
    j2["mcwf"] = {{"n_traj", 24}, {"master_seed", 4243}};
    REQUIRE(csv_text(run_scenario(parse_config(j2))) != csv_text(rec));
}

TEST_CASE("sweeping the cavity loss rate degrades the attainable squeezing") {
    json base;
    base["name"] = "kappa_sweep";
    base["engine"] = "lindblad_vi";
    base["truncation"] = {{"N_a", 4}, {"N_b", 4}};
    base["grid"] = {{"r_max", 0.3}, {"samples", 3}};
    base["rates"] = {{"units", "g"}, {"kappa_a", 0.005}};

    SweepResult sw = run_sweep(base, "rates.kappa_a", {0.005, 0.02, 0.08});
    REQUIRE(sw.records.size() == 3);
    double v0 = min_v_ar(sw.records[0]);
    double v1 = min_v_ar(sw.records[1]);
    double v2 = min_v_ar(sw.records[2]);
    REQUIRE(v0 < v1);
    REQUIRE(v1 < v2);

    auto ls = lines_of(sweep_csv_text(sw));
    REQUIRE(ls[0] == "axis,value," + std::string(kHeader));
    REQUIRE(ls[1].rfind("rates.kappa_a,0.005,lindblad_vi,", 0) == 0);
    // 3 runs x 3 output rows + header
    REQUIRE(ls.size() == 10);
}

TEST_CASE("sweeping the pump detuning walks the pair-coupling family") {
    json base;
    base["name"] = "family";
    base["engine"] = "schrodinger_vi";
    base["model"] = {{"Delta", 95.0}, {"Omega", 50.0}};
    base["truncation"] = {{"N_a", 16}, {"N_b", 16}};
    base["grid"] = {{"r_max", 0.6}, {"samples", 3}};

    // eta = 2*Omega - Delta gives 5, 10, 20: pair coupling g/20, g/40, g/80.
    SweepResult sw = run_sweep(base, "model.Delta", {95.0, 90.0, 80.0});
    REQUIRE(sw.records.size() == 3);
    for (size_t k = 0; k < 3; ++k) {
        const auto& rows = sw.records[k].engine_runs[0].rows;
        REQUIRE(rows.back().r == Approx(0.6).margin(1e-12));
    }
    // The weaker the pair coupling, the closer the full interaction tracks the
    // ideal squeezing law at fixed r.
    double ideal = 2.0 * std::exp(-2.0 * 0.6);
    double dev_strong =
        std::abs(sw.records[0].engine_runs[0].rows.back().v_ar - ideal);
    double dev_weak =
        std::abs(sw.records[2].engine_runs[0].rows.back().v_ar - ideal);
    REQUIRE(dev_weak < dev_strong);
    REQUIRE(dev_strong < 0.5);
}

TEST_CASE("sweep plumbing rejects bad axes and passes through empty value lists") {
    json base = small_base();
    REQUIRE(code_of([&] { run_sweep(base, "nope.key", {1.0}); }) ==
            ErrorCode::config_invalid);
    REQUIRE(code_of([&] { run_sweep(base, "name", {1.0}); }) ==
            ErrorCode::config_invalid);

    SweepResult empty = run_sweep(base, "grid.r_max", {});
    REQUIRE(empty.records.empty());
    REQUIRE(lines_of(sweep_csv_text(empty)).size() == 1);
}
