// combotrial: simulate operating characteristics, run or replay single
// trials, and serve the conduct API.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "combotrial/conduct.hpp"
#include "combotrial/events.hpp"
#include "combotrial/json_io.hpp"
#include "combotrial/report.hpp"
#include "combotrial/scenarios.hpp"
#include "combotrial/simulator.hpp"
#include "combotrial/trial_engine.hpp"

namespace fs = std::filesystem;
using namespace combotrial;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitReplay = 3;

struct ConfigFailure {
    std::string message;
};

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

DesignConfig load_config(const std::string& path) {
    if (path.empty()) return {};
    try {
        return design_config_from_json(read_json_file(path));
    } catch (const ConfigError& e) {
        throw ConfigFailure{"config " + std::string(e.what())};
    }
}

ScenarioFile load_scenario(const std::string& path, DesignConfig& config, bool config_given) {
    try {
        ScenarioFile f = scenario_from_json(read_json_file(path), config.grid);
        if (f.grid) {
            if (config_given && (f.grid->a != config.grid.a || f.grid->b != config.grid.b))
                throw ConfigError("grid", "scenario grid differs from the config grid");
            config.grid = *f.grid;
        }
        if (f.scenario.name.empty()) f.scenario.name = fs::path(path).stem().string();
        return f;
    } catch (const ConfigError& e) {
        throw ConfigFailure{"scenario " + std::string(e.what())};
    }
}

struct SimulateArgs {
    std::string scenario, config, out, scheme = "MAR";
    long long reps = 1000;
    std::uint64_t seed = 1;
    unsigned parallelism = 1;
    bool ar_only = false;
    int patients = 100;
    int reference = 1;
};

int simulate(const SimulateArgs& a) {
    if (a.reps < 1) throw ConfigFailure{"reps: must be at least 1"};
    if (a.patients < 1) throw ConfigFailure{"patients: must be at least 1"};
    DesignConfig config = load_config(a.config);
    const ScenarioFile sf = load_scenario(a.scenario, config, !a.config.empty());
    fs::create_directories(a.out);
    const auto reps = static_cast<std::size_t>(a.reps);

    if (a.ar_only) {
        if (sf.response_rates.empty()) throw ConfigFailure{"scenario response_rates: required with --ar-only"};
        ArOnlyConfig cfg;
        cfg.n_patients = a.patients;
        cfg.scheme = a.scheme == "FAR" ? RandomizationScheme::FAR : RandomizationScheme::MAR;
        if (a.reference < 1 || static_cast<std::size_t>(a.reference) > sf.response_rates.size())
            throw ConfigFailure{"reference: must name an arm (1-based)"};
        cfg.reference_arm = static_cast<std::size_t>(a.reference - 1);
        cfg.mcmc = config.mcmc;
        cfg.model = config.eff_model;
        const ArOnlyResult r = run_ar_only(sf.response_rates, reps, a.seed, cfg, a.parallelism);
        const std::string text = format_ar_only(r, sf.response_rates, cfg.scheme);
        write_file(fs::path(a.out) / "ar_only.txt", text);
        std::ostringstream alloc;
        alloc << "replicate";
        for (std::size_t k = 0; k < sf.response_rates.size(); ++k) alloc << ",arm" << k + 1;
        alloc << "\n";
        for (std::size_t rep = 0; rep < r.allocations.size(); ++rep) {
            alloc << rep;
            for (int n : r.allocations[rep]) alloc << "," << n;
            alloc << "\n";
        }
        write_file(fs::path(a.out) / "allocations.csv", alloc.str());
        write_file(fs::path(a.out) / "trajectory.csv", trajectory_csv(r));
        std::cout << text;
        return 0;
    }

    if (!sf.has_truth) throw ConfigFailure{"scenario toxicity: truth matrices are required for a full simulation"};
    try {
        sf.scenario.validate(config.grid);
    } catch (const std::exception& e) {
        throw ConfigFailure{std::string("scenario: ") + e.what()};
    }
    std::vector<TrialResult> raw;
    const OperatingCharacteristics oc = run_oc(sf.scenario, config, reps, a.seed, a.parallelism, &raw);
    const std::string table = format_oc_table(oc, &sf.scenario);
    write_file(fs::path(a.out) / "oc.txt", table);
    write_file(fs::path(a.out) / "oc.csv", oc_csv(oc, &sf.scenario));
    write_file(fs::path(a.out) / "summary.csv", summary_csv(oc));
    write_file(fs::path(a.out) / "replicates.csv", replicates_csv(raw, a.seed));
    write_file(fs::path(a.out) / "config.json", to_json(config).dump(2) + "\n");
    std::cout << table;
    return 0;
}

int run_single(const std::string& scenario, const std::string& config_path, std::uint64_t seed,
               const std::string& log_path) {
    DesignConfig config = load_config(config_path);
    const ScenarioFile sf = load_scenario(scenario, config, !config_path.empty());
    if (!sf.has_truth) throw ConfigFailure{"scenario toxicity: truth matrices are required"};
    std::vector<Event> events;
    const TrialResult r = run_trial(sf.scenario, config, seed, &events);
    if (!log_path.empty()) {
        std::ostringstream out;
        out << log_header().dump() << "\n";
        for (const auto& e : events) out << event_to_json(e).dump() << "\n";
        write_file(log_path, out.str());
    }
    std::cout << "selected: " << (r.selected ? r.selected->label() : "none") << "\n"
              << "reason: " << r.reason << "\n"
              << "enrolled: " << r.enrolled << "\n"
              << "admissible:";
    for (const auto& c : r.admissible) std::cout << " " << c.label();
    std::cout << "\nduration: " << r.duration << " months\n";
    return 0;
}

int replay(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        std::cerr << "replay: cannot open " << path << "\n";
        return kExitReplay;
    }
    try {
        const ParsedLog log = parse_log(in);
        json report = state_to_json(log.state);
        const TrialResult r = result_of(log.state);
        report["duration"] = r.duration;
        report["invariants"] = "ok";
        std::cout << report.dump(2) << "\n";
        return 0;
    } catch (const ReplayError& e) {
        std::cerr << "replay: " << e.what() << "\n";
        return kExitReplay;
    }
}

int serve(const std::string& host, int port) {
    const char* env = std::getenv("COMBOTRIAL_DATA_DIR");
    ConductService service(env && *env ? env : "trials");
    httplib::Server server;
    register_routes(server, service);
    std::cerr << "serving on " << host << ":" << port << ", data in " << service.data_dir() << "\n";
    if (!server.listen(host, port)) {
        std::cerr << "serve: cannot bind " << host << ":" << port << "\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian phase I/II drug-combination trial simulator and conduct service"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "Simulate operating characteristics");
    s->add_option("--scenario", sim.scenario, "Scenario file (JSON)")->required();
    s->add_option("--config", sim.config, "Design configuration (JSON); defaults apply when absent");
    s->add_option("--reps", sim.reps, "Number of simulated trials");
    s->add_option("--seed", sim.seed, "Master seed");
    s->add_option("--out", sim.out, "Output directory")->required();
    s->add_option("--parallelism", sim.parallelism, "Worker threads (0 = all cores)");
    s->add_flag("--ar-only", sim.ar_only, "Randomization-only harness on the scenario's response_rates");
    s->add_option("--patients", sim.patients, "Patients per trial for --ar-only");
    s->add_option("--scheme", sim.scheme, "MAR or FAR for --ar-only")->check(CLI::IsMember({"MAR", "FAR"}));
    s->add_option("--reference", sim.reference, "FAR reference arm (1-based) for --ar-only");

    std::string run_scenario, run_config, run_log;
    std::uint64_t run_seed = 1;
    auto* r = app.add_subcommand("run", "Simulate one trial and write its event log");
    r->add_option("--scenario", run_scenario, "Scenario file (JSON)")->required();
    r->add_option("--config", run_config, "Design configuration (JSON)");
    r->add_option("--seed", run_seed, "Trial seed");
    r->add_option("--log", run_log, "Event log output path");

    std::string replay_path;
    auto* rp = app.add_subcommand("replay", "Rebuild and check a trial from its event log");
    rp->add_option("log", replay_path, "Event log")->required();

    std::string host = "127.0.0.1";
    int port = 8080;
    auto* sv = app.add_subcommand("serve", "Run the conduct HTTP service (data in $COMBOTRIAL_DATA_DIR)");
    sv->add_option("--host", host, "Bind address");
    sv->add_option("--port", port, "Port");

    int scenario_number = 1;
    auto* ex = app.add_subcommand("export-scenario", "Print a reference scenario as JSON");
    ex->add_option("number", scenario_number, "Scenario number 1..12")->required()->check(CLI::Range(1, 12));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*s) return simulate(sim);
        if (*r) return run_single(run_scenario, run_config, run_seed, run_log);
        if (*rp) return replay(replay_path);
        if (*sv) return serve(host, port);
        if (*ex) {
            const ReferenceScenario ref = reference_scenario(scenario_number);
            std::cout << to_json(ref.scenario, default_grid()).dump(2) << "\n";
            return 0;
        }
    } catch (const ConfigFailure& e) {
        std::cerr << "error: " << e.message << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
