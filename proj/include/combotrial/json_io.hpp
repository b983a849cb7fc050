#pragma once

// JSON encodings of configurations and scenarios. Readers report the exact
// field path of the first offending value.

#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "combotrial/design.hpp"
#include "combotrial/dose_models.hpp"

namespace combotrial {

using json = nlohmann::json;

/// A rejected input, carrying the field path (e.g. "toxicity[2][1]").
class ConfigError : public std::runtime_error {
   public:
    ConfigError(std::string path, const std::string& message)
        : std::runtime_error(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}
    const std::string& path() const { return path_; }

   private:
    std::string path_;
};

namespace io {

inline std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

inline std::string index(const std::string& path, std::size_t k) { return path + "[" + std::to_string(k) + "]"; }

inline void expect_object(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(path, "expected an object");
    std::set<std::string> keys(allowed.begin(), allowed.end());
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!keys.count(it.key())) throw ConfigError(join(path, it.key()), "unknown field");
}

inline double number(const json& j, const std::string& path) {
    if (!j.is_number()) throw ConfigError(path, "expected a number");
    return j.get<double>();
}

inline int integer(const json& j, const std::string& path) {
    if (!j.is_number_integer()) throw ConfigError(path, "expected an integer");
    return j.get<int>();
}

inline bool boolean(const json& j, const std::string& path) {
    if (!j.is_boolean()) throw ConfigError(path, "expected true or false");
    return j.get<bool>();
}

inline std::string string(const json& j, const std::string& path) {
    if (!j.is_string()) throw ConfigError(path, "expected a string");
    return j.get<std::string>();
}

inline std::vector<double> numbers(const json& j, const std::string& path) {
    if (!j.is_array()) throw ConfigError(path, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t k = 0; k < j.size(); ++k) out.push_back(number(j[k], index(path, k)));
    return out;
}

/// Reads a matrix of probabilities laid out one row per drug-A level.
inline Matrix prob_matrix(const json& j, const std::string& path, std::size_t rows, std::size_t cols) {
    if (!j.is_array()) throw ConfigError(path, "expected an array of rows");
    if (j.size() != rows)
        throw ConfigError(path, "expected " + std::to_string(rows) + " rows (one per drug A level), got " +
                                    std::to_string(j.size()));
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows; ++i) {
        const auto row_path = index(path, i);
        if (!j[i].is_array()) throw ConfigError(row_path, "expected an array");
        if (j[i].size() != cols)
            throw ConfigError(row_path, "expected " + std::to_string(cols) + " entries (one per drug B level), got " +
                                            std::to_string(j[i].size()));
        for (std::size_t c = 0; c < cols; ++c) {
            const double v = number(j[i][c], index(row_path, c));
            if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(index(row_path, c), "probability must lie in [0,1]");
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = v;
        }
    }
    return m;
}

inline json matrix_json(const Matrix& m) {
    json out = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        out.push_back(row);
    }
    return out;
}

inline json matrix_json(const CountMatrix& m) {
    json out = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        out.push_back(row);
    }
    return out;
}

inline DoseGrid grid(const json& j, const std::string& path) {
    expect_object(j, path, {"a", "b"});
    if (!j.contains("a")) throw ConfigError(join(path, "a"), "missing");
    if (!j.contains("b")) throw ConfigError(join(path, "b"), "missing");
    DoseGrid g{numbers(j["a"], join(path, "a")), numbers(j["b"], join(path, "b"))};
    try {
        g.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path, e.what());
    }
    return g;
}

inline GammaPrior gamma_prior(const json& j, const std::string& path, GammaPrior fallback) {
    expect_object(j, path, {"shape", "rate"});
    if (j.contains("shape")) fallback.shape = number(j["shape"], join(path, "shape"));
    if (j.contains("rate")) fallback.rate = number(j["rate"], join(path, "rate"));
    if (!(fallback.shape > 0.0)) throw ConfigError(join(path, "shape"), "must be positive");
    if (!(fallback.rate > 0.0)) throw ConfigError(join(path, "rate"), "must be positive");
    return fallback;
}

inline json gamma_json(const GammaPrior& g) { return {{"shape", g.shape}, {"rate", g.rate}}; }

}  // namespace io

inline json to_json(const DoseGrid& g) { return {{"a", g.a}, {"b", g.b}}; }

inline json to_json(const DesignConfig& c) {
    return {
        {"grid", to_json(c.grid)},
        {"phi_t", c.phi_t},
        {"phi_e", c.phi_e},
        {"n1", c.n1},
        {"n2", c.n2},
        {"cohort_size", c.cohort_size},
        {"c_e", c.c_e},
        {"c_d", c.c_d},
        {"c_a", c.c_a},
        {"c_f", c.c_f},
        {"group_size", c.group_size},
        {"assess_window", c.assess_window},
        {"accrual_rate", c.accrual_rate},
        {"priors",
         {{"alpha", io::gamma_json(c.tox_priors.alpha)},
          {"beta", io::gamma_json(c.tox_priors.beta)},
          {"gamma", io::gamma_json(c.tox_priors.gamma)},
          {"zeta", io::gamma_json(c.eff_model.zeta)},
          {"xi", io::gamma_json(c.eff_model.xi)}}},
        {"mcmc",
         {{"n_keep", c.mcmc.n_keep},
          {"n_burn", c.mcmc.n_burn},
          {"adapt", c.mcmc.adapt},
          {"initial_step", c.mcmc.initial_step},
          {"hyper_sweeps", c.eff_model.hyper_sweeps}}},
        {"randomization",
         {{"scheme", c.scheme == RandomizationScheme::MAR ? "MAR" : "FAR"},
          {"reference_arm", c.far_reference + 1}}},
        {"admissible_cap", c.admissible_cap},
    };
}

/// Parses a design configuration; absent fields keep their defaults.
inline DesignConfig design_config_from_json(const json& j, const std::string& path = "") {
    io::expect_object(j, path,
                      {"grid", "phi_t", "phi_e", "n1", "n2", "cohort_size", "c_e", "c_d", "c_a", "c_f", "group_size",
                       "assess_window", "accrual_rate", "priors", "mcmc", "randomization", "admissible_cap"});
    DesignConfig c;
    auto num = [&](const char* key, double& out) {
        if (j.contains(key)) out = io::number(j[key], io::join(path, key));
    };
    auto integer = [&](const char* key, int& out) {
        if (j.contains(key)) out = io::integer(j[key], io::join(path, key));
    };
    if (j.contains("grid")) c.grid = io::grid(j["grid"], io::join(path, "grid"));
    num("phi_t", c.phi_t);
    num("phi_e", c.phi_e);
    integer("n1", c.n1);
    integer("n2", c.n2);
    integer("cohort_size", c.cohort_size);
    num("c_e", c.c_e);
    num("c_d", c.c_d);
    num("c_a", c.c_a);
    num("c_f", c.c_f);
    integer("group_size", c.group_size);
    num("assess_window", c.assess_window);
    num("accrual_rate", c.accrual_rate);
    integer("admissible_cap", c.admissible_cap);
    if (j.contains("priors")) {
        const auto& p = j["priors"];
        const auto pp = io::join(path, "priors");
        io::expect_object(p, pp, {"alpha", "beta", "gamma", "zeta", "xi"});
        if (p.contains("alpha")) c.tox_priors.alpha = io::gamma_prior(p["alpha"], io::join(pp, "alpha"), c.tox_priors.alpha);
        if (p.contains("beta")) c.tox_priors.beta = io::gamma_prior(p["beta"], io::join(pp, "beta"), c.tox_priors.beta);
        if (p.contains("gamma")) c.tox_priors.gamma = io::gamma_prior(p["gamma"], io::join(pp, "gamma"), c.tox_priors.gamma);
        if (p.contains("zeta")) c.eff_model.zeta = io::gamma_prior(p["zeta"], io::join(pp, "zeta"), c.eff_model.zeta);
        if (p.contains("xi")) c.eff_model.xi = io::gamma_prior(p["xi"], io::join(pp, "xi"), c.eff_model.xi);
    }
    if (j.contains("mcmc")) {
        const auto& m = j["mcmc"];
        const auto mp = io::join(path, "mcmc");
        io::expect_object(m, mp, {"n_keep", "n_burn", "adapt", "initial_step", "hyper_sweeps"});
        if (m.contains("n_keep")) c.mcmc.n_keep = io::integer(m["n_keep"], io::join(mp, "n_keep"));
        if (m.contains("n_burn")) c.mcmc.n_burn = io::integer(m["n_burn"], io::join(mp, "n_burn"));
        if (m.contains("adapt")) c.mcmc.adapt = io::boolean(m["adapt"], io::join(mp, "adapt"));
        if (m.contains("hyper_sweeps"))
            c.eff_model.hyper_sweeps = io::integer(m["hyper_sweeps"], io::join(mp, "hyper_sweeps"));
        if (m.contains("initial_step")) {
            const auto steps = io::numbers(m["initial_step"], io::join(mp, "initial_step"));
            if (steps.size() != 3) throw ConfigError(io::join(mp, "initial_step"), "expected three entries");
            for (std::size_t d = 0; d < 3; ++d) c.mcmc.initial_step[d] = steps[d];
        }
        if (c.mcmc.n_keep < 100) throw ConfigError(io::join(mp, "n_keep"), "must be at least 100");
        if (c.eff_model.hyper_sweeps < 1) throw ConfigError(io::join(mp, "hyper_sweeps"), "must be positive");
    }
    if (j.contains("randomization")) {
        const auto& r = j["randomization"];
        const auto rp = io::join(path, "randomization");
        io::expect_object(r, rp, {"scheme", "reference_arm"});
        if (r.contains("scheme")) {
            const auto s = io::string(r["scheme"], io::join(rp, "scheme"));
            if (s == "MAR") c.scheme = RandomizationScheme::MAR;
            else if (s == "FAR") c.scheme = RandomizationScheme::FAR;
            else throw ConfigError(io::join(rp, "scheme"), "expected \"MAR\" or \"FAR\"");
        }
        if (r.contains("reference_arm")) {
            const int ref = io::integer(r["reference_arm"], io::join(rp, "reference_arm"));
            if (ref < 1) throw ConfigError(io::join(rp, "reference_arm"), "arms are numbered from 1");
            c.far_reference = static_cast<std::size_t>(ref - 1);
        }
    }
    // Map the remaining range checks onto field paths.
    auto check = [&](bool ok, const char* key, const char* msg) {
        if (!ok) throw ConfigError(io::join(path, key), msg);
    };
    auto in01 = [](double v) { return v > 0.0 && v < 1.0; };
    check(in01(c.phi_t), "phi_t", "must lie in (0,1)");
    check(in01(c.phi_e), "phi_e", "must lie in (0,1)");
    check(in01(c.c_e), "c_e", "must lie in (0,1)");
    check(in01(c.c_d), "c_d", "must lie in (0,1)");
    check(in01(c.c_a), "c_a", "must lie in (0,1)");
    check(in01(c.c_f), "c_f", "must lie in (0,1)");
    check(c.c_d < c.c_e, "c_d", "must be below c_e");
    check(c.n1 >= 1, "n1", "must be positive");
    check(c.n2 >= 1, "n2", "must be positive");
    check(c.cohort_size >= 1, "cohort_size", "must be positive");
    check(c.group_size >= 1 && c.group_size <= c.n2, "group_size", "must lie in [1, n2]");
    check(c.assess_window >= 0.0, "assess_window", "must be non-negative");
    check(c.accrual_rate > 0.0, "accrual_rate", "must be positive");
    check(c.admissible_cap >= 0, "admissible_cap", "must be non-negative");
    c.validate();
    return c;
}

inline json to_json(const TimeToEfficacy& t) {
    return {{"pattern", to_string(t.pattern)}, {"shape", t.shape}, {"in_window", t.in_window}};
}

inline TimeToEfficacy time_to_efficacy_from_json(const json& j, const std::string& path) {
    io::expect_object(j, path, {"pattern", "shape", "in_window"});
    TimeToEfficacy t;
    if (j.contains("pattern")) {
        const auto p = io::string(j["pattern"], io::join(path, "pattern"));
        try {
            t.pattern = hazard_from_string(p);
        } catch (const std::invalid_argument&) {
            throw ConfigError(io::join(path, "pattern"), "expected increasing, constant, decreasing or hump");
        }
    }
    if (j.contains("shape")) t.shape = io::number(j["shape"], io::join(path, "shape"));
    if (j.contains("in_window")) t.in_window = io::number(j["in_window"], io::join(path, "in_window"));
    if (!(t.in_window > 0.0 && t.in_window < 1.0)) throw ConfigError(io::join(path, "in_window"), "must lie in (0,1)");
    if (t.shape < 0.0) throw ConfigError(io::join(path, "shape"), "must be non-negative");
    return t;
}

/// Contents of a scenario file. `grid` is present when the file pins its own
/// dose ladders. `response_rates` feeds the randomization-only harness.
struct ScenarioFile {
    std::optional<DoseGrid> grid;
    Scenario scenario;
    std::vector<double> response_rates;
    bool has_truth = false;
};

inline LogisticCoeffs logistic_from_json(const json& j, const std::string& path, const DoseGrid& g) {
    io::expect_object(j, path, {"b0", "b1", "b2", "b3", "zA", "zB"});
    LogisticCoeffs c;
    if (j.contains("b0")) c.b0 = io::number(j["b0"], io::join(path, "b0"));
    if (j.contains("b1")) c.b1 = io::number(j["b1"], io::join(path, "b1"));
    if (j.contains("b2")) c.b2 = io::number(j["b2"], io::join(path, "b2"));
    if (j.contains("b3")) c.b3 = io::number(j["b3"], io::join(path, "b3"));
    c.zA = j.contains("zA") ? io::numbers(j["zA"], io::join(path, "zA")) : g.a;
    c.zB = j.contains("zB") ? io::numbers(j["zB"], io::join(path, "zB")) : g.b;
    if (c.zA.size() != g.rows()) throw ConfigError(io::join(path, "zA"), "length must match the drug A ladder");
    if (c.zB.size() != g.cols()) throw ConfigError(io::join(path, "zB"), "length must match the drug B ladder");
    return c;
}

/// Parses a scenario file. Matrices are laid out one row per drug A level.
/// `fallback_grid` sizes the matrices when the file carries no grid.
inline ScenarioFile scenario_from_json(const json& j, const DoseGrid& fallback_grid) {
    io::expect_object(j, "",
                      {"name", "grid", "toxicity", "efficacy", "toxicity_logistic", "efficacy_logistic", "hazard",
                       "response_rates"});
    ScenarioFile f;
    if (j.contains("name")) f.scenario.name = io::string(j["name"], "name");
    if (j.contains("grid")) f.grid = io::grid(j["grid"], "grid");
    const DoseGrid& g = f.grid ? *f.grid : fallback_grid;

    const bool has_tox = j.contains("toxicity") || j.contains("toxicity_logistic");
    const bool has_eff = j.contains("efficacy") || j.contains("efficacy_logistic");
    if (j.contains("toxicity") && j.contains("toxicity_logistic"))
        throw ConfigError("toxicity_logistic", "give either toxicity or toxicity_logistic, not both");
    if (j.contains("efficacy") && j.contains("efficacy_logistic"))
        throw ConfigError("efficacy_logistic", "give either efficacy or efficacy_logistic, not both");
    if (has_tox != has_eff)
        throw ConfigError(has_tox ? "efficacy" : "toxicity", "missing (toxicity and efficacy truths come together)");
    if (has_tox) {
        f.scenario.toxicity = j.contains("toxicity")
                                  ? io::prob_matrix(j["toxicity"], "toxicity", g.rows(), g.cols())
                                  : logistic_truth(logistic_from_json(j["toxicity_logistic"], "toxicity_logistic", g));
        f.scenario.efficacy = j.contains("efficacy")
                                  ? io::prob_matrix(j["efficacy"], "efficacy", g.rows(), g.cols())
                                  : logistic_truth(logistic_from_json(j["efficacy_logistic"], "efficacy_logistic", g));
        f.has_truth = true;
    }
    if (j.contains("hazard")) f.scenario.time_to_efficacy = time_to_efficacy_from_json(j["hazard"], "hazard");
    if (j.contains("response_rates")) {
        f.response_rates = io::numbers(j["response_rates"], "response_rates");
        if (f.response_rates.empty()) throw ConfigError("response_rates", "at least one arm is required");
        for (std::size_t k = 0; k < f.response_rates.size(); ++k)
            if (!(f.response_rates[k] >= 0.0 && f.response_rates[k] <= 1.0))
                throw ConfigError(io::index("response_rates", k), "probability must lie in [0,1]");
    }
    if (!f.has_truth && f.response_rates.empty())
        throw ConfigError("toxicity", "missing (a scenario needs truth matrices or response_rates)");
    return f;
}

inline json to_json(const Scenario& s, const DoseGrid& g) {
    return {{"name", s.name},
            {"grid", to_json(g)},
            {"toxicity", io::matrix_json(s.toxicity)},
            {"efficacy", io::matrix_json(s.efficacy)},
            {"hazard", to_json(s.time_to_efficacy)}};
}

/// Reads a whole JSON document, turning parse failures into ConfigError
/// with the parser's line and column.
inline json read_json_file(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError(file, "cannot open file");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(file, e.what());
    }
}

}  // namespace combotrial
