#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "combotrial/dose_models.hpp"
#include "combotrial/efficacy.hpp"
#include "combotrial/posterior.hpp"
#include "combotrial/rng.hpp"

namespace combotrial {

/// A dose combination, zero-based: i indexes drug A, j indexes drug B.
/// Printed one-based as (A_{i+1}, B_{j+1}).
struct Combo {
    int i = 0;
    int j = 0;

    auto operator<=>(const Combo&) const = default;

    std::string label() const { return "(A" + std::to_string(i + 1) + ",B" + std::to_string(j + 1) + ")"; }
};

enum class HazardPattern { Increasing, Constant, Decreasing, Hump };

inline const char* to_string(HazardPattern h) {
    switch (h) {
        case HazardPattern::Increasing: return "increasing";
        case HazardPattern::Constant: return "constant";
        case HazardPattern::Decreasing: return "decreasing";
        case HazardPattern::Hump: return "hump";
    }
    return "constant";
}

inline HazardPattern hazard_from_string(const std::string& s) {
    if (s == "increasing") return HazardPattern::Increasing;
    if (s == "constant") return HazardPattern::Constant;
    if (s == "decreasing") return HazardPattern::Decreasing;
    if (s == "hump") return HazardPattern::Hump;
    throw std::invalid_argument("unknown hazard pattern '" + s + "'");
}

/// Time-to-response model for responders. Weibull (shape 2, 1, 0.5) for the
/// increasing, constant and decreasing hazards; log-logistic (shape 2) for
/// the hump. The scale puts `in_window` of the untruncated mass inside the
/// assessment window; draws are then conditioned on the window.
struct TimeToEfficacy {
    HazardPattern pattern = HazardPattern::Constant;
    double shape = 0.0;  // 0 picks the pattern default
    double in_window = 0.8;

    double effective_shape() const {
        if (shape > 0.0) return shape;
        switch (pattern) {
            case HazardPattern::Increasing: return 2.0;
            case HazardPattern::Constant: return 1.0;
            case HazardPattern::Decreasing: return 0.5;
            case HazardPattern::Hump: return 2.0;
        }
        return 1.0;
    }

    double scale(double window) const {
        const double k = effective_shape();
        if (pattern == HazardPattern::Hump) return window / std::pow(in_window / (1.0 - in_window), 1.0 / k);
        return window / std::pow(-std::log1p(-in_window), 1.0 / k);
    }

    double cdf(double t, double window) const {
        if (t <= 0.0) return 0.0;
        const double k = effective_shape(), lam = scale(window);
        if (pattern == HazardPattern::Hump) return 1.0 / (1.0 + std::pow(t / lam, -k));
        return -std::expm1(-std::pow(t / lam, k));
    }

    double quantile(double u, double window) const {
        const double k = effective_shape(), lam = scale(window);
        if (pattern == HazardPattern::Hump) return lam * std::pow(u / (1.0 - u), 1.0 / k);
        return lam * std::pow(-std::log1p(-u), 1.0 / k);
    }

    void validate() const {
        if (!(in_window > 0.0 && in_window < 1.0))
            throw std::invalid_argument("hazard.in_window must lie in (0,1)");
        if (shape < 0.0 || !std::isfinite(shape)) throw std::invalid_argument("hazard.shape must be non-negative");
    }
};

/// Efficacy adjudication time after enrollment, in months. Non-responders
/// are adjudicated at the end of the window; responders draw from the
/// hazard model truncated to [0, window].
inline double sample_outcome_times(bool responder, const TimeToEfficacy& model, double window, Rng& rng) {
    if (!responder || window <= 0.0) return std::max(window, 0.0);
    const double u = uniform_open(rng) * model.cdf(window, window);
    return std::clamp(model.quantile(u, window), 0.0, window);
}

enum class RandomizationScheme { MAR, FAR };

struct DesignConfig {
    DoseGrid grid = default_grid();
    double phi_t = 0.33;
    double phi_e = 0.2;
    int n1 = 20;
    int n2 = 60;
    int cohort_size = 1;
    double c_e = 0.8;
    double c_d = 0.45;
    double c_a = 0.45;
    double c_f = 0.1;
    int group_size = 1;
    double assess_window = 0.0;  // months; 0 means efficacy is observed at enrollment
    double accrual_rate = 2.0;   // patients per month
    ToxicityPriors tox_priors;
    EfficacyModel eff_model;
    McmcConfig mcmc;
    RandomizationScheme scheme = RandomizationScheme::MAR;
    std::size_t far_reference = 0;  // arm index used by FAR
    int admissible_cap = 0;         // 0 keeps every admissible combination

    void validate() const {
        grid.validate();
        auto prob = [](double v, const char* name) {
            if (!(v > 0.0 && v < 1.0)) throw std::invalid_argument(std::string(name) + " must lie in (0,1)");
        };
        prob(phi_t, "phi_t");
        prob(phi_e, "phi_e");
        prob(c_e, "c_e");
        prob(c_d, "c_d");
        prob(c_a, "c_a");
        prob(c_f, "c_f");
        if (!(c_d < c_e)) throw std::invalid_argument("c_d must be below c_e");
        if (n1 < 1) throw std::invalid_argument("n1 must be positive");
        if (n2 < 1) throw std::invalid_argument("n2 must be positive");
        if (cohort_size < 1) throw std::invalid_argument("cohort_size must be positive");
        if (group_size < 1 || group_size > n2) throw std::invalid_argument("group_size must lie in [1, n2]");
        if (!(assess_window >= 0.0) || !std::isfinite(assess_window))
            throw std::invalid_argument("assess_window must be non-negative");
        if (!(accrual_rate > 0.0) || !std::isfinite(accrual_rate))
            throw std::invalid_argument("accrual_rate must be positive");
        if (admissible_cap < 0) throw std::invalid_argument("admissible_cap must be non-negative");
        mcmc.validate();
    }

    int capacity() const { return n1 + n2; }
};

/// True state of nature for simulation.
struct Scenario {
    std::string name;
    Matrix toxicity;
    Matrix efficacy;
    TimeToEfficacy time_to_efficacy;

    void validate(const DoseGrid& grid) const {
        const auto I = static_cast<Eigen::Index>(grid.rows()), J = static_cast<Eigen::Index>(grid.cols());
        if (toxicity.rows() != I || toxicity.cols() != J)
            throw std::domain_error("scenario toxicity matrix does not match the dose grid");
        if (efficacy.rows() != I || efficacy.cols() != J)
            throw std::domain_error("scenario efficacy matrix does not match the dose grid");
        auto in01 = [](const Matrix& m) { return (m.array() >= 0.0).all() && (m.array() <= 1.0).all(); };
        if (!in01(toxicity) || !in01(efficacy)) throw std::domain_error("scenario probabilities must lie in [0,1]");
        time_to_efficacy.validate();
    }
};

/// The up-to-four neighbours an escalation may move to, clipped to the grid.
inline std::vector<Combo> candidate_escalation_set(Combo c, int rows, int cols) {
    const Combo raw[] = {{c.i + 1, c.j}, {c.i + 1, c.j - 1}, {c.i - 1, c.j + 1}, {c.i, c.j + 1}};
    std::vector<Combo> out;
    for (const Combo& n : raw)
        if (n.i >= 0 && n.i < rows && n.j >= 0 && n.j < cols) out.push_back(n);
    return out;
}

inline std::vector<Combo> candidate_deescalation_set(Combo c, int rows, int cols) {
    const Combo raw[] = {{c.i - 1, c.j}, {c.i - 1, c.j + 1}, {c.i + 1, c.j - 1}, {c.i, c.j - 1}};
    std::vector<Combo> out;
    for (const Combo& n : raw)
        if (n.i >= 0 && n.i < rows && n.j >= 0 && n.j < cols) out.push_back(n);
    return out;
}

enum class Phase { PhaseOne, PhaseTwo, Finished };

inline const char* to_string(Phase p) {
    switch (p) {
        case Phase::PhaseOne: return "phase1";
        case Phase::PhaseTwo: return "phase2";
        case Phase::Finished: return "finished";
    }
    return "finished";
}

enum class ClosureReason { Toxicity, Futility };

inline const char* to_string(ClosureReason r) { return r == ClosureReason::Toxicity ? "toxicity" : "futility"; }

struct TrialResult {
    std::optional<Combo> selected;
    std::string reason;
    CountMatrix patients;  // per combination, both phases
    CountMatrix dlts;
    std::vector<Combo> admissible;
    double duration = 0.0;  // months, first enrollment to last adjudicated outcome
    int enrolled = 0;
    bool terminated_in_phase_one = false;
};

}  // namespace combotrial
