#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "combotrial/dose_models.hpp"
#include "combotrial/posterior.hpp"
#include "combotrial/rng.hpp"

namespace combotrial {

/// Per-arm efficacy tallies: n[k] patients with an adjudicated outcome, y[k]
/// responders among them.
struct ArmData {
    std::vector<int> n;
    std::vector<int> y;

    std::size_t size() const { return n.size(); }

    void validate() const {
        if (n.empty()) throw std::domain_error("efficacy: at least one arm is required");
        if (y.size() != n.size()) throw std::domain_error("efficacy: n and y lengths differ");
        for (std::size_t k = 0; k < n.size(); ++k)
            if (y[k] < 0 || y[k] > n[k])
                throw std::domain_error("efficacy: need 0 <= y <= n in arm " + std::to_string(k));
    }
};

/// Beta(zeta, xi) population model for the arm response rates.
struct EfficacyModel {
    GammaPrior zeta{0.01, 0.01};
    GammaPrior xi{0.01, 0.01};
    /// Sweeps of the hyperparameter Metropolis step per Gibbs iteration; the
    /// step is O(1) given the sufficient statistics so extra sweeps are cheap.
    int hyper_sweeps = 5;
    /// Pins (zeta, xi); only the conditional Beta draws run.
    std::optional<std::array<double, 2>> fixed_hyper;
};

/// Retained draws: `p` is n_keep x K; zeta and xi are per draw.
struct EffPosteriorChain {
    Matrix p;
    std::vector<double> zeta;
    std::vector<double> xi;
    McmcDiagnostics diagnostics;

    std::size_t size() const { return static_cast<std::size_t>(p.rows()); }
    std::size_t arms() const { return static_cast<std::size_t>(p.cols()); }

    static EffPosteriorChain degenerate(const std::vector<double>& rates, std::size_t n_draws = 1) {
        EffPosteriorChain c;
        c.p.resize(static_cast<Eigen::Index>(n_draws), static_cast<Eigen::Index>(rates.size()));
        for (std::size_t k = 0; k < rates.size(); ++k) c.p.col(static_cast<Eigen::Index>(k)).setConstant(rates[k]);
        c.zeta.assign(n_draws, 1.0);
        c.xi.assign(n_draws, 1.0);
        return c;
    }
};

namespace detail {

inline double log_beta_fn(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

}  // namespace detail

/// Gibbs sampler for the hierarchical model
///   y_k ~ Bin(n_k, p_k),  p_k ~ Be(zeta, xi),  zeta, xi ~ Ga(0.01, 0.01).
/// p_k | zeta, xi is drawn exactly from Be(zeta + y_k, xi + n_k - y_k);
/// (zeta, xi) | p moves by a joint random walk on the log scale whose scale
/// adapts during burn-in only.
inline EffPosteriorChain sample_efficacy_posterior(const ArmData& arms, const McmcConfig& config,
                                                   std::uint64_t seed, const EfficacyModel& model = {}) {
    arms.validate();
    config.validate();
    const std::size_t K = arms.size();
    Rng rng(seed);

    double log_zeta = std::log(model.fixed_hyper ? (*model.fixed_hyper)[0] : model.zeta.mean());
    double log_xi = std::log(model.fixed_hyper ? (*model.fixed_hyper)[1] : model.xi.mean());
    double log_step = std::log(config.initial_step[0]);
    long accepted = 0, proposed = 0;

    EffPosteriorChain chain;
    chain.p.resize(config.n_keep, static_cast<Eigen::Index>(K));
    chain.zeta.reserve(static_cast<std::size_t>(config.n_keep));
    chain.xi.reserve(static_cast<std::size_t>(config.n_keep));

    std::vector<double> p(K);
    const int total = config.n_burn + config.n_keep;
    for (int it = 0; it < total; ++it) {
        const bool burning = it < config.n_burn;
        const double zeta = std::exp(log_zeta), xi = std::exp(log_xi);
        double sum_log_p = 0.0, sum_log_q = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const BetaDraw d = beta_variate(rng, zeta + arms.y[k], xi + arms.n[k] - arms.y[k]);
            p[k] = d.value;
            sum_log_p += d.log_value;
            sum_log_q += d.log_complement;
        }

        if (!model.fixed_hyper) {
            const double dk = static_cast<double>(K);
            auto target = [&](double lz, double lx) {
                const double z = std::exp(lz), x = std::exp(lx);
                if (!(z > 0.0) || !(x > 0.0) || !std::isfinite(z) || !std::isfinite(x))
                    return -std::numeric_limits<double>::infinity();
                return (z - 1.0) * sum_log_p + (x - 1.0) * sum_log_q - dk * detail::log_beta_fn(z, x) +
                       model.zeta.shape * lz - model.zeta.rate * z + model.xi.shape * lx - model.xi.rate * x;
            };
            double current = target(log_zeta, log_xi);
            for (int s = 0; s < model.hyper_sweeps; ++s) {
                const double step = std::exp(log_step);
                const double cz = log_zeta + step * standard_normal(rng);
                const double cx = log_xi + step * standard_normal(rng);
                const double cand = target(cz, cx);
                const bool accept = std::isfinite(cand) && std::log(uniform_open(rng)) < cand - current;
                if (accept) {
                    log_zeta = cz;
                    log_xi = cx;
                    current = cand;
                }
                if (burning && config.adapt)
                    log_step = detail::adapt_log_step(log_step, accept, 0.35, it * model.hyper_sweeps + s);
                if (!burning) {
                    ++proposed;
                    if (accept) ++accepted;
                }
            }
        }

        if (burning) continue;
        const auto row = static_cast<Eigen::Index>(chain.zeta.size());
        for (std::size_t k = 0; k < K; ++k) chain.p(row, static_cast<Eigen::Index>(k)) = p[k];
        chain.zeta.push_back(std::exp(log_zeta));
        chain.xi.push_back(std::exp(log_xi));
    }
    chain.diagnostics.acceptance.push_back(proposed > 0 ? static_cast<double>(accepted) / proposed : 0.0);
    chain.diagnostics.step.push_back(std::exp(log_step));
    return chain;
}

/// pr(p_k > phi_E | D), strict inequality.
inline double prob_exceeds(const EffPosteriorChain& chain, std::size_t k, double phi_e) {
    if (k >= chain.arms()) throw std::out_of_range("prob_exceeds: arm index out of range");
    const auto col = chain.p.col(static_cast<Eigen::Index>(k));
    return static_cast<double>((col.array() > phi_e).count()) / static_cast<double>(col.size());
}

inline double posterior_mean(const EffPosteriorChain& chain, std::size_t k) {
    if (k >= chain.arms()) throw std::out_of_range("posterior_mean: arm index out of range");
    return chain.p.col(static_cast<Eigen::Index>(k)).mean();
}

}  // namespace combotrial
