// Command-line front end: run a scenario, sweep one config field, or list the
// canned parameter sets.

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tmsq/scenarios.hpp"

namespace {

using tmsq::ErrorCode;
using tmsq::SimError;

int usage(std::ostream& os) {
    os << "usage:\n"
          "  tmsq run (--scenario <name> | --config <path>) [--out <dir>]\n"
          "           [--traj N] [--seed S] [--fock N] [--strict]\n"
          "  tmsq sweep --config <path> --axis <field> --values a,b,c [--out <dir>]\n"
          "  tmsq list-scenarios\n";
    return 2;
}

int exit_code_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::config_invalid:
    case ErrorCode::degenerate_detuning:
        return 2;
    default:
        return 3;
    }
}

void print_error(ErrorCode code, const std::string& message) {
    nlohmann::json err = {{"error", tmsq::error_code_name(code)}, {"message", message}};
    std::cerr << err.dump() << "\n";
}

struct Args {
    std::string command;
    std::optional<std::string> scenario, config, out, axis, values;
    std::optional<long long> traj;
    std::optional<unsigned long long> seed;
    std::optional<int> fock;
    bool strict = false;
};

std::optional<Args> parse_args(int argc, char** argv) {
    if (argc < 2) return std::nullopt;
    Args a;
    a.command = argv[1];
    for (int i = 2; i < argc; ++i) {
        std::string flag = argv[i];
        auto value = [&]() -> std::optional<std::string> {
            if (i + 1 >= argc) return std::nullopt;
            return std::string(argv[++i]);
        };
        if (flag == "--scenario") {
            a.scenario = value();
            if (!a.scenario) return std::nullopt;
        } else if (flag == "--config") {
            a.config = value();
            if (!a.config) return std::nullopt;
        } else if (flag == "--out") {
            a.out = value();
            if (!a.out) return std::nullopt;
        } else if (flag == "--axis") {
            a.axis = value();
            if (!a.axis) return std::nullopt;
        } else if (flag == "--values") {
            a.values = value();
            if (!a.values) return std::nullopt;
        } else if (flag == "--traj") {
            auto v = value();
            if (!v) return std::nullopt;
            a.traj = std::atoll(v->c_str());
        } else if (flag == "--seed") {
            auto v = value();
            if (!v) return std::nullopt;
            a.seed = std::strtoull(v->c_str(), nullptr, 10);
        } else if (flag == "--fock") {
            auto v = value();
            if (!v) return std::nullopt;
            a.fock = std::atoi(v->c_str());
        } else if (flag == "--strict") {
            a.strict = true;
        } else {
            return std::nullopt;
        }
    }
    return a;
}

nlohmann::json load_json_for_run(const Args& a) {
    if (a.scenario && a.config) {
        tmsq::fail(ErrorCode::config_invalid, "give --scenario or --config, not both");
    }
    if (a.scenario) {
        auto builtins = tmsq::builtin_scenarios();
        auto it = builtins.find(*a.scenario);
        if (it == builtins.end()) {
            tmsq::fail(ErrorCode::config_invalid,
                       "no builtin scenario named '" + *a.scenario +
                           "' (see list-scenarios)");
        }
        return it->second;
    }
    if (a.config) {
        std::ifstream in(*a.config);
        if (!in) {
            tmsq::fail(ErrorCode::config_invalid,
                       "cannot open config file '" + *a.config + "'");
        }
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            tmsq::fail(ErrorCode::config_invalid,
                       "config file '" + *a.config + "' is not valid JSON: " + e.what());
        }
        return j;
    }
    tmsq::fail(ErrorCode::config_invalid, "run needs --scenario or --config");
}

void apply_cli_overrides(nlohmann::json& j, const Args& a) {
    if (a.traj) j["mcwf"]["n_traj"] = *a.traj;
    if (a.seed) j["mcwf"]["master_seed"] = *a.seed;
    if (a.fock) {
        j["truncation"]["N_a"] = *a.fock;
        j["truncation"]["N_b"] = *a.fock;
    }
    if (a.out) j["output"]["dir"] = *a.out;
    if (a.strict) j["strict"] = true;
}

int cmd_run(const Args& a) {
    nlohmann::json j = load_json_for_run(a);
    apply_cli_overrides(j, a);
    tmsq::ScenarioConfig cfg = tmsq::parse_config(j);
    tmsq::RunRecord rec = tmsq::run_scenario(cfg);
    std::cout << tmsq::summary_json(cfg, rec).dump(2) << "\n";
    if (cfg.strict && !rec.warnings.empty()) {
        std::string joined;
        for (const auto& w : rec.warnings) {
            if (!joined.empty()) joined += "; ";
            joined += w;
        }
        print_error(ErrorCode::truncation_leak, "strict mode: " + joined);
        return 3;
    }
    return 0;
}

int cmd_sweep(const Args& a) {
    if (!a.config || !a.axis || !a.values) {
        tmsq::fail(ErrorCode::config_invalid, "sweep needs --config, --axis, --values");
    }
    std::ifstream in(*a.config);
    if (!in) {
        tmsq::fail(ErrorCode::config_invalid, "cannot open config file '" + *a.config + "'");
    }
    nlohmann::json base;
    try {
        in >> base;
    } catch (const nlohmann::json::exception& e) {
        tmsq::fail(ErrorCode::config_invalid,
                   "config file '" + *a.config + "' is not valid JSON: " + e.what());
    }
    std::vector<double> values;
    std::stringstream ss(*a.values);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        char* end = nullptr;
        double v = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0') {
            tmsq::fail(ErrorCode::config_invalid, "bad sweep value '" + tok + "'");
        }
        values.push_back(v);
    }
    tmsq::SweepResult res = tmsq::run_sweep(base, *a.axis, values);
    std::string csv = tmsq::sweep_csv_text(res);

    std::string name = base.contains("name") && base["name"].is_string()
                           ? base["name"].get<std::string>()
                           : "sweep";
    std::string axis_tag = *a.axis;
    for (auto& ch : axis_tag) {
        if (ch == '.') ch = '_';
    }
    if (a.out) {
        std::filesystem::create_directories(*a.out);
        std::filesystem::path p =
            std::filesystem::path(*a.out) / (name + "_sweep_" + axis_tag + ".csv");
        std::ofstream os(p, std::ios::binary);
        if (!os) {
            tmsq::fail(ErrorCode::config_invalid,
                       "cannot write sweep CSV under '" + *a.out + "'");
        }
        os << csv;
        std::cout << "{\"runs\": " << res.records.size() << ", \"csv\": \""
                  << p.string() << "\"}\n";
    } else {
        std::cout << csv;
    }
    return 0;
}

int cmd_list() {
    for (const auto& [name, j] : tmsq::builtin_scenarios()) {
        const auto& m = j.at("model");
        std::printf("%-15s Delta=%gg Omega=%gg  engines=", name.c_str(),
                    m.at("Delta").get<double>(), m.at("Omega").get<double>());
        bool first = true;
        for (const auto& e : j.at("engines")) {
            std::printf("%s%s", first ? "" : ",", e.get<std::string>().c_str());
            first = false;
        }
        const auto& r = j.at("rates");
        std::printf("  rates[%s]=(gamma=%g, gamma_ph=%g, kappa=%g)\n",
                    r.at("units").get<std::string>().c_str(),
                    r.at("gamma").get<double>(), r.at("gamma_ph").get<double>(),
                    r.at("kappa_a").get<double>());
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    auto args = parse_args(argc, argv);
    if (!args) return usage(std::cerr);
    try {
        if (args->command == "run") return cmd_run(*args);
        if (args->command == "sweep") return cmd_sweep(*args);
        if (args->command == "list-scenarios") return cmd_list();
        return usage(std::cerr);
    } catch (const SimError& e) {
        print_error(e.code(), e.what());
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        print_error(ErrorCode::integrator_failure, e.what());
        return 3;
    }
}
