#include <cmath>
#include <numeric>
#include <vector>

#include <boost/math/distributions/gamma.hpp>
#include <gtest/gtest.h>

#include "combotrial/posterior.hpp"
#include "combotrial/quadrature_oracle.hpp"
#include "support.hpp"

using namespace combotrial;
using combotrial::testing::make_counts;
using combotrial::testing::oracle_datasets;

namespace {

McmcConfig long_chain() {
    McmcConfig c;
    c.n_keep = 10000;
    c.n_burn = 500;
    return c;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double sd(const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / (v.size() - 1));
}

}  // namespace

TEST(ProbBelow, DegenerateChains) {
    Matrix s = Matrix::Constant(3, 2, 0.1);
    EXPECT_EQ(prob_below(ToxPosteriorChain::degenerate(s, 10), 0, 0, 0.33), 1.0);
    s.setConstant(0.33);
    EXPECT_EQ(prob_below(ToxPosteriorChain::degenerate(s, 10), 0, 0, 0.33), 0.0);
}

TEST(ProbBelow, HalfOfDraws) {
    ToxPosteriorChain c = ToxPosteriorChain::degenerate(Matrix::Constant(3, 2, 0.1), 10);
    for (Eigen::Index d = 0; d < 5; ++d) c.surfaces(d, c.cell(0, 0)) = 0.5;
    EXPECT_DOUBLE_EQ(prob_below(c, 0, 0, 0.33), 0.5);
    EXPECT_DOUBLE_EQ(posterior_mean_toxicity(c, 0, 0), 0.3);
    EXPECT_THROW(prob_below(c, 3, 0, 0.33), std::out_of_range);
}

TEST(ToxicitySampler, SeedDeterminism) {
    const auto data = make_counts({{0, 0, 3, 1}, {1, 0, 2, 0}});
    const McmcConfig cfg;
    const auto a = sample_toxicity_posterior(data, default_grid(), {}, cfg, 42);
    const auto b = sample_toxicity_posterior(data, default_grid(), {}, cfg, 42);
    const auto c = sample_toxicity_posterior(data, default_grid(), {}, cfg, 43);
    ASSERT_EQ(a.size(), 2000u);
    EXPECT_TRUE(a.surfaces == b.surfaces);
    for (std::size_t d = 0; d < a.draws.size(); ++d) {
        EXPECT_EQ(a.draws[d].alpha, b.draws[d].alpha);
        EXPECT_EQ(a.draws[d].gamma, b.draws[d].gamma);
    }
    EXPECT_FALSE(a.surfaces == c.surfaces);
}

TEST(ToxicitySampler, DrawsArePositiveAndSurfacesBounded) {
    const auto chain = sample_toxicity_posterior(make_counts({{2, 1, 3, 3}}), default_grid(), {}, {}, 5);
    for (const auto& p : chain.draws) EXPECT_TRUE(p.valid());
    EXPECT_TRUE((chain.surfaces.array() >= 0.0).all());
    EXPECT_TRUE((chain.surfaces.array() <= 1.0).all());
}

TEST(ToxicitySampler, AcceptanceRatesInRange) {
    const auto chain =
        sample_toxicity_posterior(make_counts({{0, 0, 6, 1}, {1, 0, 6, 2}}), default_grid(), {}, {}, 17);
    ASSERT_EQ(chain.diagnostics.acceptance.size(), 3u);
    for (double a : chain.diagnostics.acceptance) {
        EXPECT_GT(a, 0.1);
        EXPECT_LT(a, 0.7);
    }
}

TEST(ToxicitySampler, RejectsInvalidInput) {
    McmcConfig short_chain;
    short_chain.n_keep = 50;
    EXPECT_THROW(sample_toxicity_posterior(ToxicityCounts::zeros(3, 2), default_grid(), {}, short_chain, 1),
                 std::exception);
    EXPECT_THROW(sample_toxicity_posterior(ToxicityCounts::zeros(2, 2), default_grid(), {}, {}, 1), std::exception);
    ToxicityCounts bad = ToxicityCounts::zeros(3, 2);
    bad.n(0, 0) = 1;
    bad.x(0, 0) = 2;
    EXPECT_THROW(sample_toxicity_posterior(bad, default_grid(), {}, {}, 1), std::exception);
}

// Batch means over independent chains: each chain contributes one estimate,
// so the spread across chains is an honest Monte Carlo standard error.
TEST(ToxicitySampler, NoDataRecoversPriorMeans) {
    const int chains = 20;
    std::vector<double> al, be, ga;
    for (int s = 0; s < chains; ++s) {
        const auto chain = sample_toxicity_posterior(ToxicityCounts::zeros(3, 2), default_grid(), {}, long_chain(),
                                                     1000 + s);
        double sa = 0, sb = 0, sg = 0;
        for (const auto& p : chain.draws) {
            sa += p.alpha;
            sb += p.beta;
            sg += p.gamma;
        }
        const double n = static_cast<double>(chain.draws.size());
        al.push_back(sa / n);
        be.push_back(sb / n);
        ga.push_back(sg / n);
    }
    for (const auto* v : {&al, &be, &ga}) {
        const double se = sd(*v) / std::sqrt(static_cast<double>(chains));
        EXPECT_LT(std::abs(mean(*v) - 1.0), 3.0 * se) << "mean " << mean(*v) << " se " << se;
    }
}

TEST(ToxicitySampler, NoDataRecoversGammaPriorQuantiles) {
    const boost::math::gamma_distribution<double> prior(0.1, 1.0 / 0.1);
    const int chains = 20;
    for (double q : {0.25, 0.5, 0.75}) {
        const double x = boost::math::quantile(prior, q);
        std::vector<double> frac;
        for (int s = 0; s < chains; ++s) {
            const auto chain = sample_toxicity_posterior(ToxicityCounts::zeros(3, 2), default_grid(), {}, long_chain(),
                                                         7000 + s);
            int below = 0;
            for (const auto& p : chain.draws) below += p.gamma < x;
            frac.push_back(static_cast<double>(below) / chain.draws.size());
        }
        const double se = sd(frac) / std::sqrt(static_cast<double>(chains));
        EXPECT_LT(std::abs(mean(frac) - q), 3.0 * se) << "q " << q << " got " << mean(frac) << " se " << se;
    }
}

TEST(ToxicitySampler, SingleNonToxicObservationLowersRisk) {
    const DoseGrid g = default_grid();
    const auto prior = sample_toxicity_posterior(ToxicityCounts::zeros(3, 2), g, {}, long_chain(), 3);
    const auto post = sample_toxicity_posterior(make_counts({{0, 0, 1, 0}}), g, {}, long_chain(), 3);
    EXPECT_LT(posterior_mean_toxicity(post, 0, 0), posterior_mean_toxicity(prior, 0, 0));
}

TEST(ToxicitySampler, MatchesOracleOnReferenceDataset) {
    const auto data = oracle_datasets().front().counts;
    const OracleResult ref = quadrature_oracle(data, default_grid(), {});
    const auto chain = sample_toxicity_posterior(data, default_grid(), {}, long_chain(), 99);
    EXPECT_NEAR(posterior_mean_toxicity(chain, 1, 0), ref.mean_pi(1, 0), 0.02);
}

TEST(ToxicitySamplerProperty, AgreesWithOracleOnSmallDatasets) {
    for (const auto& [name, data] : oracle_datasets()) {
        const OracleResult ref = quadrature_oracle(data, default_grid(), {});
        const auto chain = sample_toxicity_posterior(data, default_grid(), {}, long_chain(), 2024);
        const Matrix m = posterior_mean_surface(chain), pb = prob_below_surface(chain, 0.33);
        EXPECT_LE((m - ref.mean_pi).cwiseAbs().maxCoeff(), 0.02) << name;
        EXPECT_LE((pb - ref.prob_below).cwiseAbs().maxCoeff(), 0.03) << name;
    }
}

TEST(ToxicitySamplerProperty, PosteriorContracts) {
    const DoseGrid g = default_grid();
    const ToxicityParams truth{1.2, 0.8, 0.6};
    const Matrix pi = toxicity_surface(truth, g);
    const int seeds = 20;
    std::vector<double> avg_sd;
    for (int n : {20, 80, 320}) {
        double total = 0.0;
        for (int s = 0; s < seeds; ++s) {
            Rng rng(derive_seed(55, static_cast<std::uint64_t>(s * 1000 + n)));
            ToxicityCounts c = ToxicityCounts::zeros(3, 2);
            for (int k = 0; k < n; ++k) {
                const int i = k % 3, j = (k / 3) % 2;
                c.n(i, j) += 1;
                c.x(i, j) += bernoulli(rng, pi(i, j));
            }
            const auto chain = sample_toxicity_posterior(c, g, {}, {}, derive_seed(77, static_cast<std::uint64_t>(s)));
            const Matrix centered = chain.surfaces.rowwise() - chain.surfaces.colwise().mean();
            total += (centered.array().square().colwise().sum() / (chain.size() - 1.0)).sqrt().mean();
        }
        avg_sd.push_back(total / seeds);
    }
    EXPECT_GE(avg_sd[0], avg_sd[1]);
    EXPECT_GE(avg_sd[1], avg_sd[2]);
}

TEST(QuadratureOracle, NoDataGivesPriorMeans) {
    const OracleResult r = quadrature_oracle(ToxicityCounts::zeros(3, 2), default_grid(), {});
    EXPECT_NEAR(r.mean_params.alpha, 1.0, 0.005);
    EXPECT_NEAR(r.mean_params.beta, 1.0, 0.005);
    EXPECT_NEAR(r.mean_params.gamma, 1.0, 0.005);
}

TEST(QuadratureOracle, PointPriorGivesSurfaceAtUnitParams) {
    const GammaPrior tight{1e6, 1e6};
    const ToxicityPriors pr{tight, tight, tight};
    const auto data = make_counts({{0, 0, 3, 1}});
    const OracleResult r = quadrature_oracle(data, default_grid(), pr);
    const Matrix expected = toxicity_surface({1.0, 1.0, 1.0}, default_grid());
    EXPECT_LT((r.mean_pi - expected).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(QuadratureOracle, RefusesLargeDatasets) {
    EXPECT_THROW(quadrature_oracle(make_counts({{0, 0, 41, 3}}), default_grid(), {}), OracleError);
}
