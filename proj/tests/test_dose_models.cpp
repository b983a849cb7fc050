#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "combotrial/dose_models.hpp"

using namespace combotrial;

namespace {

ToxicityParams unit() { return {1.0, 1.0, 1.0}; }

ToxicityCounts counts1(int n, int x) {
    ToxicityCounts c = ToxicityCounts::zeros(1, 1);
    c.n(0, 0) = n;
    c.x(0, 0) = x;
    return c;
}

// Plain evaluation of the copula formula, no log-space tricks.
double naive_pi(const ToxicityParams& p, double a, double b) {
    const double u = std::pow(1.0 - std::pow(a, p.alpha), -p.gamma);
    const double v = std::pow(1.0 - std::pow(b, p.beta), -p.gamma);
    return 1.0 - std::pow(u + v - 1.0, -1.0 / p.gamma);
}

}  // namespace

TEST(ComboToxicity, ZeroMarginsGiveZero) { EXPECT_EQ(combo_toxicity(unit(), 0.0, 0.0), 0.0); }

TEST(ComboToxicity, CertainMarginGivesOne) { EXPECT_EQ(combo_toxicity(unit(), 0.2, 1.0), 1.0); }

TEST(ComboToxicity, HandEvaluation) {
    const double expected = 1.0 - 1.0 / (1.25 + 1.0 / 0.9 - 1.0);
    EXPECT_NEAR(combo_toxicity(unit(), 0.2, 0.1), expected, 1e-14);
    EXPECT_NEAR(combo_toxicity(unit(), 0.2, 0.1), 0.265306, 1e-6);
}

TEST(ComboToxicity, SingleAgentReduction) {
    EXPECT_NEAR(combo_toxicity({1.0, 2.0, 1.0}, 0.0, 0.3), 0.09, 1e-14);
}

TEST(ComboToxicity, AgreesWithNaiveFormulaAtModerateGamma) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.01, 0.95), par(0.2, 4.0);
    for (int t = 0; t < 500; ++t) {
        const ToxicityParams p{par(rng), par(rng), par(rng)};
        const double a = u(rng), b = u(rng);
        EXPECT_NEAR(combo_toxicity(p, a, b), naive_pi(p, a, b), 1e-10);
    }
}

TEST(ComboToxicity, IndependenceLimitForTinyGamma) {
    const ToxicityParams p{1.3, 0.7, 1e-9};
    const double a = 0.3, b = 0.2;
    const double indep = 1.0 - (1.0 - std::pow(a, 1.3)) * (1.0 - std::pow(b, 0.7));
    EXPECT_NEAR(combo_toxicity(p, a, b), indep, 1e-7);
}

TEST(ComboToxicity, LargeGammaStaysFiniteAndBounded) {
    for (double g : {50.0, 500.0, 1e5}) {
        const double v = combo_toxicity({0.5, 0.5, g}, 0.2, 0.1);
        EXPECT_TRUE(std::isfinite(v));
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        // As gamma grows the copula tends to the maximum of the margins.
        EXPECT_GE(v, std::max(std::pow(0.2, 0.5), std::pow(0.1, 0.5)) - 1e-9);
    }
}

TEST(ComboToxicity, RejectsBadInput) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(combo_toxicity(unit(), nan, 0.1), std::domain_error);
    EXPECT_THROW(combo_toxicity({1.0, std::numeric_limits<double>::infinity(), 1.0}, 0.1, 0.1), std::domain_error);
    EXPECT_THROW(combo_toxicity(unit(), -0.1, 0.1), std::domain_error);
    EXPECT_THROW(combo_toxicity(unit(), 0.1, 1.5), std::domain_error);
    EXPECT_THROW(combo_toxicity({0.0, 1.0, 1.0}, 0.1, 0.1), std::domain_error);
}

TEST(ComboToxicityProperty, MonotoneOnLattice) {
    std::mt19937_64 rng(11);
    std::gamma_distribution<double> prior(0.5, 2.0);
    for (int t = 0; t < 20; ++t) {
        const ToxicityParams p{prior(rng) + 1e-3, prior(rng) + 1e-3, prior(rng) + 1e-3};
        for (int i = 0; i < 50; ++i) {
            const double a = i / 50.0;
            for (int j = 0; j < 50; ++j) {
                const double b = j / 50.0;
                const double v = combo_toxicity(p, a, b);
                EXPECT_GE(combo_toxicity(p, a + 0.02, b), v - 1e-12);
                EXPECT_GE(combo_toxicity(p, a, b + 0.02), v - 1e-12);
            }
        }
    }
}

TEST(ComboToxicityProperty, Boundaries) {
    std::mt19937_64 rng(5);
    std::gamma_distribution<double> g(0.5, 2.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        const ToxicityParams p{g(rng) + 1e-6, g(rng) + 1e-6, g(rng) + 1e-6};
        EXPECT_EQ(combo_toxicity(p, 0.0, 0.0), 0.0);
        EXPECT_EQ(combo_toxicity(p, 1.0, u(rng)), 1.0);
        EXPECT_EQ(combo_toxicity(p, u(rng), 1.0), 1.0);
    }
}

TEST(ComboToxicityProperty, SingleAgentReductionRandom) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 0.99), par(0.05, 10.0);
    for (int t = 0; t < 200; ++t) {
        const double beta = par(rng), gamma = par(rng), b = u(rng);
        EXPECT_NEAR(combo_toxicity({1.7, beta, gamma}, 0.0, b), std::pow(b, beta), 1e-12);
    }
}

TEST(ComboToxicityProperty, SymmetricInTheTwoAgents) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 0.99), par(0.05, 10.0);
    for (int t = 0; t < 200; ++t) {
        const double al = par(rng), be = par(rng), ga = par(rng), a = u(rng), b = u(rng);
        EXPECT_NEAR(combo_toxicity({al, be, ga}, a, b), combo_toxicity({be, al, ga}, b, a), 1e-13);
    }
}

TEST(ToxicitySurface, OneByOneGrid) {
    const Matrix m = toxicity_surface(unit(), DoseGrid{{0.2}, {0.1}});
    ASSERT_EQ(m.rows(), 1);
    ASSERT_EQ(m.cols(), 1);
    EXPECT_NEAR(m(0, 0), 0.265306, 1e-6);
}

TEST(ToxicitySurface, LastRowTendsToOne) {
    const DoseGrid g{{0.1, 0.5, 1.0 - 1e-15}, {0.1, 0.2}};
    const Matrix m = toxicity_surface({0.8, 1.2, 0.6}, g);
    for (Eigen::Index j = 0; j < 2; ++j) EXPECT_NEAR(m(2, j), 1.0, 1e-9);
}

TEST(ToxicitySurface, SuperadditiveAndMonotoneOnDefaultGrid) {
    const DoseGrid g = default_grid();
    const Matrix m = toxicity_surface(unit(), g);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
            EXPECT_GE(m(ii, jj), std::max(g.a[i], g.b[j]));
            if (i > 0) {
                EXPECT_GE(m(ii, jj), m(ii - 1, jj));
            }
            if (j > 0) {
                EXPECT_GE(m(ii, jj), m(ii, jj - 1));
            }
        }
}

TEST(DoseGrid, Validation) {
    EXPECT_NO_THROW(default_grid().validate());
    EXPECT_THROW((DoseGrid{{0.2, 0.1}, {0.1}}).validate(), std::exception);
    EXPECT_THROW((DoseGrid{{}, {0.1}}).validate(), std::exception);
    EXPECT_THROW((DoseGrid{{0.0, 0.1}, {0.1}}).validate(), std::exception);
    EXPECT_THROW((DoseGrid{{0.1}, {1.0}}).validate(), std::exception);
}

TEST(LogLikelihood, EmptyDataIsZero) {
    const DoseGrid g = default_grid();
    EXPECT_EQ(log_likelihood(unit(), g, ToxicityCounts::zeros(3, 2)), 0.0);
}

TEST(LogLikelihood, DirectArithmetic) {
    const DoseGrid g{{0.2}, {0.1}};
    const double pi = combo_toxicity(unit(), 0.2, 0.1);
    EXPECT_NEAR(log_likelihood(unit(), g, counts1(2, 1)), std::log(pi) + std::log1p(-pi), 1e-13);
    EXPECT_NEAR(log_likelihood(unit(), g, counts1(2, 1)), std::log(0.265306) + std::log(0.734694), 1e-5);
}

TEST(LogLikelihood, CertainToxicityObserved) {
    Matrix surface(1, 1);
    surface(0, 0) = 1.0;
    EXPECT_EQ(log_likelihood(surface, counts1(1, 1)), 0.0);
    surface(0, 0) = 0.0;
    EXPECT_EQ(log_likelihood(surface, counts1(3, 1)), -std::numeric_limits<double>::infinity());
    surface(0, 0) = 1.0;
    EXPECT_EQ(log_likelihood(surface, counts1(3, 2)), -std::numeric_limits<double>::infinity());
}

TEST(LogLikelihood, ClampKeepsImpossibleDataFinite) {
    Matrix surface(1, 1);
    surface(0, 0) = 0.0;
    EXPECT_TRUE(std::isfinite(log_likelihood(surface, counts1(3, 1), kLikelihoodClamp)));
}

TEST(LogLikelihood, ShapeMismatchThrows) {
    EXPECT_THROW(log_likelihood(unit(), default_grid(), ToxicityCounts::zeros(2, 2)), std::domain_error);
    Matrix surface = Matrix::Zero(3, 2);
    EXPECT_THROW(log_likelihood(surface, ToxicityCounts::zeros(3, 1)), std::domain_error);
}

TEST(LogLikelihoodProperty, MaximizedAtObservedRate) {
    for (auto [n, x] : {std::pair{10, 3}, {7, 0}, {5, 5}, {40, 13}}) {
        double best = -std::numeric_limits<double>::infinity(), arg = -1.0;
        for (int k = 0; k <= 10000; ++k) {
            Matrix s(1, 1);
            s(0, 0) = k / 10000.0;
            const double ll = log_likelihood(s, counts1(n, x));
            if (ll > best) {
                best = ll;
                arg = s(0, 0);
            }
        }
        EXPECT_NEAR(arg, static_cast<double>(x) / n, 1e-4);
    }
}

TEST(LogPosterior, DecomposesIntoLikelihoodAndPriors) {
    const DoseGrid g = default_grid();
    ToxicityCounts c = ToxicityCounts::zeros(3, 2);
    c.n(0, 0) = 3;
    c.x(0, 0) = 1;
    c.n(1, 0) = 2;
    const ToxicityPriors pr;
    const ToxicityParams p{0.7, 1.4, 0.3};
    // Gamma log densities written out independently.
    auto lg = [](double v, double shape, double rate) {
        return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(v) - rate * v;
    };
    const double priors = lg(0.7, 0.5, 0.5) + lg(1.4, 0.5, 0.5) + lg(0.3, 0.1, 0.1);
    EXPECT_NEAR(log_posterior(p, g, c, pr) - log_likelihood(p, g, c, kLikelihoodClamp), priors, 1e-12);
}

TEST(LogPosterior, NoDataEqualsPriorAtMode) {
    // Ga(2, 1) has its mode at 1.
    ToxicityPriors pr{{2.0, 1.0}, {2.0, 1.0}, {2.0, 1.0}};
    const double at_mode = log_posterior(unit(), default_grid(), ToxicityCounts::zeros(3, 2), pr);
    EXPECT_NEAR(at_mode, 3.0 * (std::log(1.0) - std::lgamma(2.0) - 1.0), 1e-12);
    EXPECT_GT(at_mode, log_posterior({1.2, 1.0, 1.0}, default_grid(), ToxicityCounts::zeros(3, 2), pr));
}

TEST(LogPosterior, OutsideSupportIsMinusInfinity) {
    const auto ninf = -std::numeric_limits<double>::infinity();
    EXPECT_EQ(log_posterior({-1.0, 1.0, 1.0}, default_grid(), ToxicityCounts::zeros(3, 2), {}), ninf);
    EXPECT_EQ(log_posterior({1.0, 0.0, 1.0}, default_grid(), ToxicityCounts::zeros(3, 2), {}), ninf);
}

TEST(LogPosterior, OrderingMatchesBruteForceRatio) {
    const DoseGrid g = default_grid();
    ToxicityCounts c = ToxicityCounts::zeros(3, 2);
    c.n(0, 0) = 4;
    c.x(0, 0) = 1;
    c.n(2, 1) = 3;
    c.x(2, 1) = 2;
    const ToxicityPriors pr;
    auto brute = [&](const ToxicityParams& p) {
        double lik = 1.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 2; ++j) {
                const double pi = naive_pi(p, g.a[static_cast<std::size_t>(i)], g.b[static_cast<std::size_t>(j)]);
                lik *= std::pow(pi, c.x(i, j)) * std::pow(1.0 - pi, c.n(i, j) - c.x(i, j));
            }
        auto dens = [](double v, double s, double r) { return std::pow(v, s - 1.0) * std::exp(-r * v); };
        return lik * dens(p.alpha, 0.5, 0.5) * dens(p.beta, 0.5, 0.5) * dens(p.gamma, 0.1, 0.1);
    };
    const ToxicityParams p1{0.8, 1.1, 0.5}, p2{2.0, 0.4, 1.5};
    const double diff = log_posterior(p1, g, c, pr) - log_posterior(p2, g, c, pr);
    EXPECT_NEAR(diff, std::log(brute(p1) / brute(p2)), 1e-9);
}

TEST(LogisticTruth, ZeroCoefficientsGiveHalf) {
    LogisticCoeffs c;
    c.zA = {0.05, 0.1, 0.2};
    c.zB = {0.1, 0.2};
    const Matrix m = logistic_truth(c);
    EXPECT_TRUE((m.array() == 0.5).all());
}

TEST(LogisticTruth, VeryNegativeInterceptGivesZeros) {
    LogisticCoeffs c{-50.0, 1.0, 1.0, 0.0, {0.05, 0.1, 0.2}, {0.1, 0.2}};
    EXPECT_TRUE((logistic_truth(c).array() < 1e-20).all());
}

TEST(LogisticTruth, DirectArithmetic) {
    LogisticCoeffs c{-2.0, 1.0, 1.0, 0.0, {0.05, 0.1, 0.2}, {0.1, 0.2}};
    const Matrix m = logistic_truth(c);
    EXPECT_NEAR(m(0, 0), 1.0 / (1.0 + std::exp(1.85)), 1e-14);
    EXPECT_NEAR(m(0, 0), 0.135873, 1e-6);
    EXPECT_EQ(m.rows(), 3);
    EXPECT_EQ(m.cols(), 2);
}
