#pragma once
// Scenario configs, canned parameter sets, engine dispatch, sweeps, and the
// CSV/JSON output layer used by the command-line tool.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tmsq/model.hpp"
#include "tmsq/observables.hpp"
#include "tmsq/solvers.hpp"

namespace tmsq {

inline constexpr const char* kVersion = "0.1.0";

enum class Engine {
    schrodinger_full, // three-level lab-frame Hamiltonian, pure states
    schrodinger_vi,   // interaction-picture two-level Hamiltonian, pure states
    schrodinger_hminus, // reduced two-mode pair Hamiltonian, pure states
    lindblad_vi,      // density-matrix master equation on the vi Hamiltonian
    mcwf_vi,          // trajectory ensemble on the vi Hamiltonian
};

Engine engine_from_name(const std::string& name);
const char* engine_name(Engine e);

struct ModeStateSpec {
    enum class Kind { vacuum, fock, coherent } kind = Kind::vacuum;
    int n = 0;            // fock
    Complex alpha{0, 0};  // coherent
};

struct QubitStateSpec {
    enum class Kind { minus, plus, ground, excited, amplitudes } kind = Kind::minus;
    std::vector<Complex> amp; // only for Kind::amplitudes
};

struct InitialStateSpec {
    QubitStateSpec qubit;
    ModeStateSpec mode_a, mode_b;
};

struct TruncationSpec {
    int N_a = 30;
    int N_b = 30;
    int qubit_levels = 2;
};

struct GridSpec {
    double r_max = 1.5;
    int samples = 31;
};

// Rates as written in the config; conversion to simulation units happens per
// run because the lambda scale depends on the model section.
struct RateSpec {
    std::string units = "lambda"; // "lambda" | "g" | "si" (s^-1, with g = 2*pi*g_in_hz)
    double gamma = 0.0, gamma_ph = 0.0, kappa_a = 0.0, kappa_b = 0.0;
};

struct ThetaPolicy {
    enum class Mode { automatic, optimize, fixed } mode = Mode::automatic;
    double fixed_value = 0.0;
};

// Per-engine replacement of the truncation and/or grid sections.
struct EngineOverride {
    bool has_truncation = false;
    TruncationSpec truncation;
    bool has_grid = false;
    GridSpec grid;
};

struct ScenarioConfig {
    std::string name = "scenario";
    ModelParams model;
    double g_in_hz = 2.0e7;
    TruncationSpec truncation;
    std::vector<Engine> engines;
    std::map<std::string, EngineOverride> engine_overrides;
    RateSpec rates;
    GridSpec grid;
    int n_traj = 600;
    std::uint64_t master_seed = 20260823;
    ThetaPolicy theta;
    InitialStateSpec initial_state;
    std::string out_dir;
    bool strict = false;
    nlohmann::json echo; // the config as parsed, defaults filled in
};

ScenarioConfig parse_config(const nlohmann::json& j);
ScenarioConfig load_config_file(const std::string& path);

DecoherenceRates resolve_rates(const RateSpec& spec, const DerivedParams& derived,
                               double g_in_hz);
KetState build_initial_state(const HilbertSpec& space, const InitialStateSpec& spec);

struct EngineRun {
    std::string engine;
    std::vector<SqueezingRecord> rows;
    std::vector<Diagnostics> diag; // same length as rows
    std::vector<std::string> warnings;
};

struct RunRecord {
    nlohmann::json config_echo;
    std::string version;
    std::string timestamp; // UTC, ISO 8601
    RegimeReport regime;
    std::vector<EngineRun> engine_runs;
    std::vector<std::string> warnings; // regime + per-engine, flattened
    double wall_seconds = 0.0;
};

// Runs every configured engine. When cfg.out_dir is set, also writes
// <name>.csv and <name>_summary.json there.
RunRecord run_scenario(const ScenarioConfig& cfg);

// CSV with the fixed column set; identical configs give identical bytes.
std::string csv_text(const RunRecord& record);
void write_csv(const RunRecord& record, std::ostream& os);
nlohmann::json summary_json(const ScenarioConfig& cfg, const RunRecord& record);

struct SweepResult {
    std::string axis;
    std::vector<double> values;
    std::vector<RunRecord> records; // one per value, same order
};

// Re-runs the base config once per value with the named numeric field (dotted
// path into the config JSON) replaced. Every run reuses the base master seed,
// so ensemble noise is comparable across the sweep. An empty value list is a
// no-op success.
SweepResult run_sweep(const nlohmann::json& base_config, const std::string& axis,
                      const std::vector<double>& values);
std::string sweep_csv_text(const SweepResult& sweep);

// Canned parameter sets; keys are the scenario names.
std::map<std::string, nlohmann::json> builtin_scenarios();

} // namespace tmsq
