#pragma once

// Deterministic reference for the toxicity posterior. Each parameter is
// mapped through its prior quantile function, so the prior becomes uniform on
// the unit cube and the posterior expectation of f is
//   E[f | D] = int f L du / int L du.
// A tensor-product midpoint rule in u gives every node equal prior mass and
// covers the whole prior. Used to validate the MCMC sampler; never on a
// decision path.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/gamma.hpp>

#include "combotrial/dose_models.hpp"

namespace combotrial {

class OracleError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

struct OracleOptions {
    double phi_t = 0.33;
    int start_nodes = 24;
    int max_nodes = 192;
    /// Stop once every functional moves by less than this between two
    /// successive doublings of the node count.
    double tolerance = 0.002;
    int max_total_patients = 40;
};

struct OracleResult {
    Matrix mean_pi;
    Matrix prob_below;
    ToxicityParams mean_params;
    int nodes = 0;           // per axis at the accepted resolution
    double last_change = 0;  // largest functional change at the final doubling
};

namespace detail {

/// Prior quantiles at the cell midpoints (k + 1/2) / nodes.
inline std::vector<double> quantile_nodes(const GammaPrior& prior, int nodes) {
    const boost::math::gamma_distribution<double> dist(prior.shape, 1.0 / prior.rate);
    std::vector<double> out;
    for (int k = 0; k < nodes; ++k) {
        const double v = boost::math::quantile(dist, (k + 0.5) / nodes);
        // Quantiles deep in a Ga(0.1, .) left tail underflow to zero.
        out.push_back(std::max(v, std::numeric_limits<double>::min()));
    }
    return out;
}

using QuietPolicy = boost::math::policies::policy<boost::math::policies::overflow_error<boost::math::policies::ignore_error>,
                                                  boost::math::policies::underflow_error<boost::math::policies::ignore_error>>;
inline QuietPolicy quiet() { return {}; }

/// Prior mean of the parameter within each of the `nodes` equal-mass cells.
/// Parameter means use these rather than the midpoints, which would miss the
/// heavy right tail of a small-shape gamma.
inline std::vector<double> cell_means(const GammaPrior& prior, int nodes) {
    const boost::math::gamma_distribution<double> dist(prior.shape, 1.0 / prior.rate);
    // E[v; v < x] = mean * P(shape + 1, rate * x).
    const auto partial = [&](double x) { return std::isinf(x) ? 1.0 : boost::math::gamma_p(prior.shape + 1.0, prior.rate * x, quiet()); };
    std::vector<double> out;
    double lo = 0.0;
    for (int k = 0; k < nodes; ++k) {
        const double hi = k + 1 == nodes ? std::numeric_limits<double>::infinity()
                                         : boost::math::quantile(dist, static_cast<double>(k + 1) / nodes);
        out.push_back(prior.mean() * (partial(hi) - partial(lo)) * nodes);
        lo = hi;
    }
    return out;
}

inline OracleResult integrate_posterior(const ToxicityCounts& counts, const DoseGrid& grid,
                                        const ToxicityPriors& priors, const OracleOptions& opt, int nodes) {
    const std::array<std::vector<double>, 3> axis{quantile_nodes(priors.alpha, nodes),
                                                  quantile_nodes(priors.beta, nodes),
                                                  quantile_nodes(priors.gamma, nodes)};
    const std::array<std::vector<double>, 3> means{cell_means(priors.alpha, nodes), cell_means(priors.beta, nodes),
                                                   cell_means(priors.gamma, nodes)};
    const std::size_t I = grid.rows(), J = grid.cols(), cells = I * J;
    std::vector<double> pi(cells), lu(I), lv(J);
    std::vector<double> acc_pi(cells, 0.0), acc_below(cells, 0.0);
    std::array<double, 3> acc_par{};
    double acc_w = 0.0;
    double ref = -std::numeric_limits<double>::infinity();

    for (std::size_t kg = 0; kg < axis[2].size(); ++kg) {
        const double g = axis[2][kg];
        for (std::size_t ka = 0; ka < axis[0].size(); ++ka) {
            const double al = axis[0][ka];
            for (std::size_t i = 0; i < I; ++i) lu[i] = log_margin_term(grid.a[i], al, g);
            for (std::size_t kb = 0; kb < axis[1].size(); ++kb) {
                const double be = axis[1][kb];
                double lp = 0.0;
                for (std::size_t j = 0; j < J; ++j) lv[j] = log_margin_term(grid.b[j], be, g);
                for (std::size_t i = 0; i < I; ++i)
                    for (std::size_t j = 0; j < J; ++j) {
                        const std::size_t c = i * J + j;
                        pi[c] = combine_margins(lu[i], lv[j], g);
                        const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
                        const int n = counts.n(ii, jj), x = counts.x(ii, jj);
                        if (n == 0) continue;
                        const double q = std::clamp(pi[c], kLikelihoodClamp, 1.0 - kLikelihoodClamp);
                        if (x > 0) lp += x * std::log(q);
                        if (n - x > 0) lp += (n - x) * std::log1p(-q);
                    }
                if (!std::isfinite(lp)) continue;
                if (lp > ref) {
                    const double scale = std::isfinite(ref) ? std::exp(ref - lp) : 0.0;
                    acc_w *= scale;
                    for (auto& v : acc_pi) v *= scale;
                    for (auto& v : acc_below) v *= scale;
                    for (auto& v : acc_par) v *= scale;
                    ref = lp;
                }
                const double w = std::exp(lp - ref);
                acc_w += w;
                for (std::size_t c = 0; c < cells; ++c) {
                    acc_pi[c] += w * pi[c];
                    if (pi[c] < opt.phi_t) acc_below[c] += w;
                }
                acc_par[0] += w * means[0][ka];
                acc_par[1] += w * means[1][kb];
                acc_par[2] += w * means[2][kg];
            }
        }
    }
    if (!(acc_w > 0.0)) throw OracleError("quadrature oracle: posterior has no mass on the integration box");

    OracleResult r;
    r.nodes = nodes;
    r.mean_pi.resize(static_cast<Eigen::Index>(I), static_cast<Eigen::Index>(J));
    r.prob_below.resize(static_cast<Eigen::Index>(I), static_cast<Eigen::Index>(J));
    for (std::size_t i = 0; i < I; ++i)
        for (std::size_t j = 0; j < J; ++j) {
            r.mean_pi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = acc_pi[i * J + j] / acc_w;
            r.prob_below(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = acc_below[i * J + j] / acc_w;
        }
    r.mean_params = {acc_par[0] / acc_w, acc_par[1] / acc_w, acc_par[2] / acc_w};
    return r;
}

}  // namespace detail

/// Posterior means of pi_ij and pr(pi_ij < phi_T | D) by quadrature, doubling
/// the resolution until the answers settle. Small datasets only.
inline OracleResult quadrature_oracle(const ToxicityCounts& counts, const DoseGrid& grid,
                                      const ToxicityPriors& priors, const OracleOptions& opt = {}) {
    grid.validate();
    counts.validate();
    if (counts.total() > opt.max_total_patients)
        throw OracleError("quadrature oracle: dataset too large for the deterministic reference");

    OracleResult prev = detail::integrate_posterior(counts, grid, priors, opt, opt.start_nodes);
    for (int nodes = opt.start_nodes * 2; nodes <= opt.max_nodes; nodes *= 2) {
        OracleResult next = detail::integrate_posterior(counts, grid, priors, opt, nodes);
        const double change = std::max((next.mean_pi - prev.mean_pi).cwiseAbs().maxCoeff(),
                                       (next.prob_below - prev.prob_below).cwiseAbs().maxCoeff());
        next.last_change = change;
        if (change < opt.tolerance) return next;
        prev = std::move(next);
    }
    throw OracleError("quadrature oracle: no convergence at the maximum resolution");
}

}  // namespace combotrial
