#pragma once

// Shared fixtures for the unit tests and the acceptance run.

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "combotrial/dose_models.hpp"
#include "combotrial/events.hpp"

namespace combotrial::testing {

struct NamedCounts {
    std::string name;
    ToxicityCounts counts;
};

/// Small toxicity datasets on the default 3 x 2 grid, each cell given as
/// {i, j, n, x} with 0-based indices.
inline ToxicityCounts make_counts(std::initializer_list<std::array<int, 4>> cells) {
    ToxicityCounts c = ToxicityCounts::zeros(3, 2);
    for (const auto& [i, j, n, x] : cells) {
        c.n(i, j) = n;
        c.x(i, j) = x;
    }
    return c;
}

inline std::vector<NamedCounts> oracle_datasets() {
    return {
        {"two_lowest_a_levels", make_counts({{0, 0, 6, 1}, {1, 0, 6, 2}})},
        {"one_of_three_at_start", make_counts({{0, 0, 3, 1}})},
        {"clean_escalation", make_counts({{0, 0, 3, 0}, {1, 0, 3, 0}, {0, 1, 3, 0}, {1, 1, 3, 1}})},
        {"toxic_top", make_counts({{0, 0, 2, 0}, {2, 0, 4, 3}, {2, 1, 2, 2}})},
        {"spread", make_counts({{0, 0, 4, 0}, {1, 0, 4, 1}, {2, 0, 4, 1}, {1, 1, 3, 1}, {2, 1, 2, 1}})},
    };
}

/// State just after creation, for driving decision rules directly.
inline TrialState fresh_state(const DesignConfig& config = {}) {
    TrialState s;
    s.apply(Created{"test", 1, config});
    return s;
}

/// State in phase II with the given arms, all open, uniform probabilities.
inline TrialState phase2_state(const std::vector<Combo>& arms, const DesignConfig& config = {}) {
    TrialState s = fresh_state(config);
    s.phase = Phase::PhaseTwo;
    s.arms = arms;
    s.closures.assign(arms.size(), std::nullopt);
    s.probs.probs.assign(arms.size(), 1.0 / static_cast<double>(arms.size()));
    return s;
}

}  // namespace combotrial::testing
