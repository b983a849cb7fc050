#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "combotrial/dose_models.hpp"
#include "combotrial/rng.hpp"

namespace combotrial {

class InferenceError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Sampling protocol. The defaults keep 2000 draws after 100 burn-in sweeps.
struct McmcConfig {
    int n_keep = 2000;
    int n_burn = 100;
    bool adapt = true;                                // step adaptation, burn-in only
    std::array<double, 3> initial_step{1.0, 1.0, 2.0};  // log-scale proposal sd per parameter

    void validate() const {
        if (n_keep < 100) throw std::invalid_argument("mcmc.n_keep must be at least 100");
        if (n_burn < 0) throw std::invalid_argument("mcmc.n_burn must be non-negative");
        for (double s : initial_step)
            if (!(s > 0.0) || !std::isfinite(s))
                throw std::invalid_argument("mcmc.initial_step must be positive");
    }
};

/// Acceptance rates over the retained sweeps and the frozen proposal scales.
struct McmcDiagnostics {
    std::vector<double> acceptance;
    std::vector<double> step;
};

/// Retained draws of (alpha, beta, gamma) plus the toxicity surface per draw.
/// `surfaces` has one row per draw and one column per cell, cell = i * J + j.
struct ToxPosteriorChain {
    std::vector<ToxicityParams> draws;
    Matrix surfaces;
    std::size_t rows = 0;
    std::size_t cols = 0;
    McmcDiagnostics diagnostics;

    std::size_t size() const { return static_cast<std::size_t>(surfaces.rows()); }
    Eigen::Index cell(std::size_t i, std::size_t j) const {
        return static_cast<Eigen::Index>(i * cols + j);
    }
    double pi(std::size_t draw, std::size_t i, std::size_t j) const {
        return surfaces(static_cast<Eigen::Index>(draw), cell(i, j));
    }

    /// Chain whose every draw carries the same surface (tests, replayed decisions).
    static ToxPosteriorChain degenerate(const Matrix& surface, std::size_t n_draws = 1) {
        ToxPosteriorChain c;
        c.rows = static_cast<std::size_t>(surface.rows());
        c.cols = static_cast<std::size_t>(surface.cols());
        c.draws.assign(n_draws, ToxicityParams{});
        c.surfaces.resize(static_cast<Eigen::Index>(n_draws), surface.size());
        for (std::size_t i = 0; i < c.rows; ++i)
            for (std::size_t j = 0; j < c.cols; ++j)
                c.surfaces.col(c.cell(i, j)).setConstant(
                    surface(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
        return c;
    }
};

namespace detail {

/// Toxicity log posterior on (log alpha, log beta, log gamma). Only cells
/// with patients enter the likelihood; margin terms are computed once per
/// dose level rather than once per cell.
class ToxTarget {
   public:
    ToxTarget(const DoseGrid& grid, const ToxicityCounts& counts, const ToxicityPriors& priors)
        : priors_(priors), lu_(grid.rows()), lv_(grid.cols()) {
        for (double a : grid.a) log_a_.push_back(std::log(a));
        for (double b : grid.b) log_b_.push_back(std::log(b));
        for (std::size_t i = 0; i < grid.rows(); ++i)
            for (std::size_t j = 0; j < grid.cols(); ++j) {
                const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
                if (counts.n(ii, jj) > 0) cells_.push_back({i, j, counts.n(ii, jj), counts.x(ii, jj)});
            }
    }

    /// Log density in the log-parameter coordinates (Jacobian included), up
    /// to an additive constant.
    double operator()(const std::array<double, 3>& theta) {
        const ToxicityParams p{std::exp(theta[0]), std::exp(theta[1]), std::exp(theta[2])};
        if (!p.valid()) return -std::numeric_limits<double>::infinity();
        // Gamma kernels only; the normalizing constants cancel in every ratio.
        double lp = priors_.alpha.shape * theta[0] - priors_.alpha.rate * p.alpha + priors_.beta.shape * theta[1] -
                    priors_.beta.rate * p.beta + priors_.gamma.shape * theta[2] - priors_.gamma.rate * p.gamma;
        for (std::size_t i = 0; i < lu_.size(); ++i) lu_[i] = margin(log_a_[i], p.alpha, p.gamma);
        for (std::size_t j = 0; j < lv_.size(); ++j) lv_[j] = margin(log_b_[j], p.beta, p.gamma);
        for (const auto& c : cells_) {
            double pi = combine_margins(lu_[c.i], lv_[c.j], p.gamma);
            pi = std::clamp(pi, kLikelihoodClamp, 1.0 - kLikelihoodClamp);
            if (c.x > 0) lp += c.x * std::log(pi);
            if (c.n - c.x > 0) lp += (c.n - c.x) * std::log1p(-pi);
        }
        return lp;
    }

   private:
    struct Cell {
        std::size_t i, j;
        int n, x;
    };
    // log_margin_term with log p cached; grid entries lie in (0,1).
    static double margin(double log_p, double e, double g) { return -g * std::log1p(-std::exp(e * log_p)); }

    const ToxicityPriors& priors_;
    std::vector<Cell> cells_;
    std::vector<double> log_a_, log_b_, lu_, lv_;
};

/// Robbins-Monro update of a log proposal scale toward a target acceptance rate.
inline double adapt_log_step(double log_step, bool accepted, double target, int iteration) {
    const double gain = 1.0 / std::sqrt(static_cast<double>(iteration) + 1.0);
    return log_step + gain * ((accepted ? 1.0 : 0.0) - target);
}

}  // namespace detail

/// Component-wise random-walk Metropolis on the log parameters, started at
/// the prior means. Proposal scales adapt toward 0.44 acceptance during
/// burn-in only, so the retained draws come from a fixed-kernel chain.
inline ToxPosteriorChain sample_toxicity_posterior(const ToxicityCounts& counts, const DoseGrid& grid,
                                                   const ToxicityPriors& priors, const McmcConfig& config,
                                                   std::uint64_t seed) {
    grid.validate();
    counts.validate();
    config.validate();
    if (static_cast<std::size_t>(counts.n.rows()) != grid.rows() ||
        static_cast<std::size_t>(counts.n.cols()) != grid.cols())
        throw std::domain_error("sample_toxicity_posterior: counts do not conform to the dose grid");

    Rng rng(seed);
    detail::ToxTarget target(grid, counts, priors);
    std::array<double, 3> theta{std::log(priors.alpha.mean()), std::log(priors.beta.mean()),
                                std::log(priors.gamma.mean())};
    double current = target(theta);
    if (!std::isfinite(current)) throw InferenceError("toxicity posterior is zero at the initial point");

    std::array<double, 3> log_step{};
    for (int d = 0; d < 3; ++d) log_step[d] = std::log(config.initial_step[static_cast<std::size_t>(d)]);
    std::array<int, 3> accepted{};

    ToxPosteriorChain chain;
    chain.rows = grid.rows();
    chain.cols = grid.cols();
    chain.draws.reserve(static_cast<std::size_t>(config.n_keep));
    chain.surfaces.resize(config.n_keep, static_cast<Eigen::Index>(grid.rows() * grid.cols()));

    const int total = config.n_burn + config.n_keep;
    for (int it = 0; it < total; ++it) {
        const bool burning = it < config.n_burn;
        for (std::size_t d = 0; d < 3; ++d) {
            auto proposal = theta;
            proposal[d] += std::exp(log_step[d]) * standard_normal(rng);
            const double cand = target(proposal);
            const bool accept = std::isfinite(cand) && std::log(uniform_open(rng)) < cand - current;
            if (accept) {
                theta = proposal;
                current = cand;
            }
            if (burning && config.adapt) log_step[d] = detail::adapt_log_step(log_step[d], accept, 0.44, it);
            if (!burning && accept) ++accepted[d];
        }
        if (burning) continue;
        const ToxicityParams p{std::exp(theta[0]), std::exp(theta[1]), std::exp(theta[2])};
        const auto row = static_cast<Eigen::Index>(chain.draws.size());
        chain.draws.push_back(p);
        for (std::size_t i = 0; i < grid.rows(); ++i)
            for (std::size_t j = 0; j < grid.cols(); ++j)
                chain.surfaces(row, chain.cell(i, j)) = combo_toxicity(p, grid.a[i], grid.b[j]);
    }
    for (std::size_t d = 0; d < 3; ++d) {
        chain.diagnostics.acceptance.push_back(static_cast<double>(accepted[d]) / config.n_keep);
        chain.diagnostics.step.push_back(std::exp(log_step[d]));
    }
    return chain;
}

/// pr(pi_ij < phi_T | D), strict inequality.
inline double prob_below(const ToxPosteriorChain& chain, std::size_t i, std::size_t j, double phi_t) {
    if (i >= chain.rows || j >= chain.cols) throw std::out_of_range("prob_below: combination outside grid");
    const auto col = chain.surfaces.col(chain.cell(i, j));
    return static_cast<double>((col.array() < phi_t).count()) / static_cast<double>(col.size());
}

inline double posterior_mean_toxicity(const ToxPosteriorChain& chain, std::size_t i, std::size_t j) {
    if (i >= chain.rows || j >= chain.cols)
        throw std::out_of_range("posterior_mean_toxicity: combination outside grid");
    return chain.surfaces.col(chain.cell(i, j)).mean();
}

/// Posterior mean toxicity surface as an I x J matrix.
inline Matrix posterior_mean_surface(const ToxPosteriorChain& chain) {
    Matrix out(static_cast<Eigen::Index>(chain.rows), static_cast<Eigen::Index>(chain.cols));
    for (std::size_t i = 0; i < chain.rows; ++i)
        for (std::size_t j = 0; j < chain.cols; ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = posterior_mean_toxicity(chain, i, j);
    return out;
}

inline Matrix prob_below_surface(const ToxPosteriorChain& chain, double phi_t) {
    Matrix out(static_cast<Eigen::Index>(chain.rows), static_cast<Eigen::Index>(chain.cols));
    for (std::size_t i = 0; i < chain.rows; ++i)
        for (std::size_t j = 0; j < chain.cols; ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = prob_below(chain, i, j, phi_t);
    return out;
}

}  // namespace combotrial
