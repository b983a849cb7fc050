#pragma once

// The twelve reference scenarios on the default 3 x 2 grid. Each is given
// as the drug B level 1 and level 2 rows across drug A levels 1..3.

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "combotrial/design.hpp"

namespace combotrial {

namespace detail {

inline Matrix by_b_rows(const std::array<double, 3>& b1, const std::array<double, 3>& b2) {
    Matrix m(3, 2);
    for (int i = 0; i < 3; ++i) {
        m(i, 0) = b1[static_cast<std::size_t>(i)];
        m(i, 1) = b2[static_cast<std::size_t>(i)];
    }
    return m;
}

}  // namespace detail

struct ReferenceScenario {
    Scenario scenario;
    std::vector<Combo> targets;  // combinations marked as target doses
};

/// Scenario `number` in 1..12.
inline ReferenceScenario reference_scenario(int number) {
    using detail::by_b_rows;
    ReferenceScenario r;
    Scenario& s = r.scenario;
    s.name = "scenario" + std::to_string(number);
    switch (number) {
        case 1:
            s.toxicity = by_b_rows({0.05, 0.15, 0.2}, {0.1, 0.15, 0.45});
            s.efficacy = by_b_rows({0.1, 0.3, 0.5}, {0.2, 0.4, 0.6});
            r.targets = {{2, 0}};
            break;
        case 2:
            s.toxicity = by_b_rows({0.05, 0.15, 0.4}, {0.1, 0.2, 0.5});
            s.efficacy = by_b_rows({0.1, 0.3, 0.5}, {0.2, 0.4, 0.55});
            r.targets = {{1, 1}};
            break;
        case 3:
            s.toxicity = by_b_rows({0.05, 0.1, 0.15}, {0.1, 0.15, 0.2});
            s.efficacy = by_b_rows({0.1, 0.2, 0.4}, {0.2, 0.3, 0.5});
            r.targets = {{2, 1}};
            break;
        case 4:
            s.toxicity = by_b_rows({0.05, 0.2, 0.5}, {0.1, 0.4, 0.6});
            s.efficacy = by_b_rows({0.2, 0.4, 0.55}, {0.3, 0.5, 0.6});
            r.targets = {{1, 0}};
            break;
        case 5:
            s.toxicity = by_b_rows({0.05, 0.15, 0.2}, {0.1, 0.2, 0.25});
            s.efficacy = by_b_rows({0.2, 0.4, 0.4}, {0.3, 0.5, 0.2});
            r.targets = {{1, 1}};
            break;
        case 6:
            s.toxicity = by_b_rows({0.05, 0.05, 0.05}, {0.05, 0.05, 0.05});
            s.efficacy = by_b_rows({0.1, 0.2, 0.4}, {0.2, 0.3, 0.5});
            r.targets = {{2, 1}};
            break;
        case 7:
            s.toxicity = by_b_rows({0.05, 0.15, 0.2}, {0.1, 0.2, 0.5});
            s.efficacy = by_b_rows({0.1, 0.3, 0.4}, {0.2, 0.4, 0.5});
            r.targets = {{1, 1}, {2, 0}};
            break;
        case 8:
            s.toxicity = by_b_rows({0.5, 0.55, 0.6}, {0.5, 0.55, 0.6});
            s.efficacy = by_b_rows({0.5, 0.5, 0.5}, {0.5, 0.5, 0.5});
            break;
        case 9:
            s.toxicity = by_b_rows({0.23, 0.4, 0.59}, {0.4, 0.72, 0.9});
            s.efficacy = by_b_rows({0.36, 0.49, 0.62}, {0.44, 0.58, 0.71});
            break;
        case 10:
            s.toxicity = by_b_rows({0.13, 0.25, 0.42}, {0.24, 0.56, 0.83});
            s.efficacy = by_b_rows({0.32, 0.5, 0.68}, {0.4, 0.6, 0.78});
            r.targets = {{1, 0}};
            break;
        case 11:
            s.toxicity = by_b_rows({0.11, 0.15, 0.2}, {0.15, 0.25, 0.4});
            s.efficacy = by_b_rows({0.15, 0.22, 0.31}, {0.3, 0.41, 0.54});
            r.targets = {{1, 1}};
            break;
        case 12:
            s.toxicity = by_b_rows({0.12, 0.15, 0.19}, {0.15, 0.19, 0.23});
            s.efficacy = by_b_rows({0.1, 0.22, 0.39}, {0.17, 0.33, 0.55});
            r.targets = {{2, 1}};
            break;
        default:
            throw std::out_of_range("reference scenarios are numbered 1..12");
    }
    return r;
}

}  // namespace combotrial
