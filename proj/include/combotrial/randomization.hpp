#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "combotrial/efficacy.hpp"
#include "combotrial/rng.hpp"

namespace combotrial {

/// Randomization probabilities over all K arms (inactive arms hold 0) and
/// the order in which arms received their share.
struct RandProbs {
    std::vector<double> probs;
    std::vector<std::size_t> order;
};

/// One pass of the moving-reference loop, kept for inspection.
struct MarStep {
    std::size_t arm;
    double r_min;
    double r_sum;
    double assigned;   // probability spent before this step
    double remaining;  // probability left before this step
    double share;      // probability given to `arm`
};

namespace detail {

inline void check_active(const std::vector<std::size_t>& active, std::size_t arms) {
    if (active.empty()) throw std::domain_error("randomization: the active arm set is empty");
    for (std::size_t k : active)
        if (k >= arms) throw std::domain_error("randomization: active arm outside the posterior chain");
    auto sorted = active;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw std::domain_error("randomization: duplicate arm in the active set");
}

}  // namespace detail

/// Moving-reference adaptive randomization. Each round compares the arms
/// still in the comparison set against their per-draw mean p-bar, gives the
/// arm with the smallest R_k = pr(p_k > p-bar) the share
/// R_min / sum(R) of the probability not yet spent, and drops it from the set.
/// Ties in R_min go to the lowest arm index. If every R_k in a round is zero
/// the remaining probability is split evenly over the set.
inline RandProbs mar_probabilities(const Matrix& draws, const std::vector<std::size_t>& active,
                                   std::vector<MarStep>* trace = nullptr) {
    detail::check_active(active, static_cast<std::size_t>(draws.cols()));
    const Eigen::Index n_draws = draws.rows();
    RandProbs out;
    out.probs.assign(static_cast<std::size_t>(draws.cols()), 0.0);

    std::vector<std::size_t> set = active;
    std::sort(set.begin(), set.end());
    double assigned = 0.0;
    std::vector<long> above(set.size());
    while (!set.empty()) {
        const double remaining = 1.0 - assigned;
        std::fill(above.begin(), above.end(), 0L);
        const double inv = 1.0 / static_cast<double>(set.size());
        for (Eigen::Index d = 0; d < n_draws; ++d) {
            double sum = 0.0;
            for (std::size_t k : set) sum += draws(d, static_cast<Eigen::Index>(k));
            const double ref = sum * inv;
            for (std::size_t s = 0; s < set.size(); ++s)
                if (draws(d, static_cast<Eigen::Index>(set[s])) > ref) ++above[s];
        }
        long r_sum = 0;
        std::size_t lowest = 0;
        for (std::size_t s = 0; s < set.size(); ++s) {
            r_sum += above[s];
            if (above[s] < above[lowest]) lowest = s;
        }
        if (r_sum == 0) {
            for (std::size_t s = 0; s < set.size(); ++s) {
                const double share = remaining * inv;
                if (trace) trace->push_back({set[s], 0.0, 0.0, assigned, 1.0 - assigned, share});
                out.probs[set[s]] = share;
                out.order.push_back(set[s]);
                assigned += share;
            }
            break;
        }
        const std::size_t arm = set[lowest];
        const double share = static_cast<double>(above[lowest]) / static_cast<double>(r_sum) * remaining;
        if (trace) {
            const double scale = 1.0 / static_cast<double>(n_draws);
            trace->push_back({arm, above[lowest] * scale, r_sum * scale, assigned, remaining, share});
        }
        out.probs[arm] = share;
        out.order.push_back(arm);
        assigned += share;
        set.erase(set.begin() + static_cast<std::ptrdiff_t>(lowest));
    }
    return out;
}

inline RandProbs mar_probabilities(const EffPosteriorChain& chain, const std::vector<std::size_t>& active,
                                   std::vector<MarStep>* trace = nullptr) {
    return mar_probabilities(chain.p, active, trace);
}

/// Fixed-reference adaptive randomization: R_ref = 0.5 and
/// R_k = pr(p_k > p_ref) otherwise, normalized over the active set.
inline RandProbs far_probabilities(const Matrix& draws, const std::vector<std::size_t>& active,
                                   std::size_t reference_arm) {
    detail::check_active(active, static_cast<std::size_t>(draws.cols()));
    if (std::find(active.begin(), active.end(), reference_arm) == active.end())
        throw std::domain_error("far_probabilities: the reference arm is not active");
    RandProbs out;
    out.probs.assign(static_cast<std::size_t>(draws.cols()), 0.0);
    const auto ref = draws.col(static_cast<Eigen::Index>(reference_arm));
    double total = 0.0;
    std::vector<std::size_t> set = active;
    std::sort(set.begin(), set.end());
    for (std::size_t k : set) {
        double r = 0.5;
        if (k != reference_arm)
            r = static_cast<double>((draws.col(static_cast<Eigen::Index>(k)).array() > ref.array()).count()) /
                static_cast<double>(draws.rows());
        out.probs[k] = r;
        total += r;
    }
    for (std::size_t k : set) out.probs[k] /= total;
    out.order = set;
    return out;
}

inline RandProbs far_probabilities(const EffPosteriorChain& chain, const std::vector<std::size_t>& active,
                                   std::size_t reference_arm) {
    return far_probabilities(chain.p, active, reference_arm);
}

/// Categorical draw from `probs` using one uniform variate.
inline std::size_t draw_assignment(const RandProbs& probs, Rng& rng) {
    const double u = uniform01(rng);
    double cum = 0.0;
    std::size_t last = probs.probs.size();
    for (std::size_t k = 0; k < probs.probs.size(); ++k) {
        if (probs.probs[k] <= 0.0) continue;
        last = k;
        cum += probs.probs[k];
        if (u < cum) return k;
    }
    if (last == probs.probs.size()) throw std::domain_error("draw_assignment: no arm has positive probability");
    return last;
}

}  // namespace combotrial
