#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace combotrial {

using Matrix = Eigen::MatrixXd;
using CountMatrix = Eigen::MatrixXi;

/// Prespecified single-agent toxicity probabilities. Drug A indexes rows,
/// drug B indexes columns of every I x J matrix in the library.
struct DoseGrid {
    std::vector<double> a;
    std::vector<double> b;

    std::size_t rows() const { return a.size(); }
    std::size_t cols() const { return b.size(); }

    /// Throws std::invalid_argument unless both ladders are non-empty and
    /// strictly increasing inside (0,1).
    void validate() const {
        auto check = [](const std::vector<double>& v, const char* name) {
            if (v.empty()) throw std::invalid_argument(std::string(name) + ": empty dose ladder");
            for (std::size_t k = 0; k < v.size(); ++k) {
                if (!(v[k] > 0.0 && v[k] < 1.0))
                    throw std::invalid_argument(std::string(name) + "[" + std::to_string(k) +
                                                "]: probability must lie in (0,1)");
                if (k > 0 && !(v[k] > v[k - 1]))
                    throw std::invalid_argument(std::string(name) + "[" + std::to_string(k) +
                                                "]: ladder must be strictly increasing");
            }
        };
        check(a, "a");
        check(b, "b");
    }

    friend bool operator==(const DoseGrid&, const DoseGrid&) = default;
};

/// The melanoma trial's ladders: three decitabine doses, two interferon doses.
inline DoseGrid default_grid() { return {{0.05, 0.1, 0.2}, {0.1, 0.2}}; }

struct ToxicityParams {
    double alpha = 1.0;
    double beta = 1.0;
    double gamma = 1.0;

    bool valid() const {
        auto ok = [](double v) { return std::isfinite(v) && v > 0.0; };
        return ok(alpha) && ok(beta) && ok(gamma);
    }
};

struct ToxicityCounts {
    CountMatrix n;  // patients treated
    CountMatrix x;  // DLTs observed

    static ToxicityCounts zeros(std::size_t rows, std::size_t cols) {
        return {CountMatrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)),
                CountMatrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols))};
    }

    int total() const { return n.sum(); }

    void validate() const {
        if (n.rows() != x.rows() || n.cols() != x.cols())
            throw std::domain_error("toxicity counts: n and x shapes differ");
        for (Eigen::Index i = 0; i < n.rows(); ++i)
            for (Eigen::Index j = 0; j < n.cols(); ++j)
                if (x(i, j) < 0 || x(i, j) > n(i, j))
                    throw std::domain_error("toxicity counts: need 0 <= x <= n at (" +
                                            std::to_string(i) + "," + std::to_string(j) + ")");
    }
};

/// Gamma prior in shape/rate form (mean = shape / rate).
struct GammaPrior {
    double shape = 1.0;
    double rate = 1.0;

    double mean() const { return shape / rate; }

    double log_density(double v) const {
        if (!(v > 0.0) || !std::isfinite(v)) return -std::numeric_limits<double>::infinity();
        return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(v) - rate * v;
    }
};

struct ToxicityPriors {
    GammaPrior alpha{0.5, 0.5};
    GammaPrior beta{0.5, 0.5};
    GammaPrior gamma{0.1, 0.1};
};

struct LogisticCoeffs {
    double b0 = 0.0, b1 = 0.0, b2 = 0.0, b3 = 0.0;
    std::vector<double> zA;
    std::vector<double> zB;
};

namespace detail {

/// log of (1 - p^e)^(-g), finite for p < 1.
inline double log_margin_term(double p, double e, double g) {
    if (p <= 0.0) return 0.0;
    if (p >= 1.0) return std::numeric_limits<double>::infinity();
    return -g * std::log1p(-std::pow(p, e));
}

/// pi from the two log margin terms lu, lv (both >= 0) and gamma.
inline double combine_margins(double lu, double lv, double g) {
    if (std::isinf(lu) || std::isinf(lv)) return 1.0;
    const double m = std::max(lu, lv);
    double log_s;
    if (m < 1.0) {
        log_s = std::log1p(std::expm1(lu) + std::expm1(lv));
    } else {
        log_s = m + std::log(std::exp(lu - m) + std::exp(lv - m) - std::exp(-m));
    }
    return std::clamp(-std::expm1(-log_s / g), 0.0, 1.0);
}

}  // namespace detail

/// Copula-type joint toxicity:
///   pi = 1 - {(1-a^alpha)^(-gamma) + (1-b^beta)^(-gamma) - 1}^(-1/gamma).
/// Evaluated on the log scale so large gamma cannot overflow and tiny gamma
/// degrades smoothly to the independence limit 1 - (1-a^alpha)(1-b^beta).
inline double combo_toxicity(const ToxicityParams& params, double a, double b) {
    if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(params.alpha) ||
        !std::isfinite(params.beta) || !std::isfinite(params.gamma))
        throw std::domain_error("combo_toxicity: non-finite input");
    if (a < 0.0 || a > 1.0 || b < 0.0 || b > 1.0)
        throw std::domain_error("combo_toxicity: probabilities must lie in [0,1]");
    if (!params.valid()) throw std::domain_error("combo_toxicity: parameters must be positive");
    if (a >= 1.0 || b >= 1.0) return 1.0;

    const double g = params.gamma;
    return detail::combine_margins(detail::log_margin_term(a, params.alpha, g),
                                   detail::log_margin_term(b, params.beta, g), g);
}

inline Matrix toxicity_surface(const ToxicityParams& params, const DoseGrid& grid) {
    Matrix out(static_cast<Eigen::Index>(grid.rows()), static_cast<Eigen::Index>(grid.cols()));
    for (std::size_t i = 0; i < grid.rows(); ++i)
        for (std::size_t j = 0; j < grid.cols(); ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                combo_toxicity(params, grid.a[i], grid.b[j]);
    return out;
}

/// Binomial log-likelihood of a probability surface (constants dropped).
/// With clamp = 0 the convention 0 log 0 = 0 applies and impossible data give
/// -inf; a positive clamp pins pi into [clamp, 1 - clamp] first.
inline double log_likelihood(const Matrix& surface, const ToxicityCounts& counts, double clamp = 0.0) {
    if (surface.rows() != counts.n.rows() || surface.cols() != counts.n.cols() ||
        counts.x.rows() != counts.n.rows() || counts.x.cols() != counts.n.cols())
        throw std::domain_error("log_likelihood: counts do not conform to the dose grid");
    double ll = 0.0;
    for (Eigen::Index i = 0; i < surface.rows(); ++i) {
        for (Eigen::Index j = 0; j < surface.cols(); ++j) {
            const int n = counts.n(i, j);
            if (n == 0) continue;
            const int x = counts.x(i, j);
            double pi = surface(i, j);
            if (clamp > 0.0) pi = std::clamp(pi, clamp, 1.0 - clamp);
            if (x > 0) ll += x * std::log(pi);
            if (n - x > 0) ll += (n - x) * std::log1p(-pi);
        }
    }
    return ll;
}

inline double log_likelihood(const ToxicityParams& params, const DoseGrid& grid,
                             const ToxicityCounts& counts, double clamp = 0.0) {
    if (static_cast<std::size_t>(counts.n.rows()) != grid.rows() ||
        static_cast<std::size_t>(counts.n.cols()) != grid.cols())
        throw std::domain_error("log_likelihood: counts do not conform to the dose grid");
    // Only cells carrying data need the surface.
    double ll = 0.0;
    for (std::size_t i = 0; i < grid.rows(); ++i) {
        for (std::size_t j = 0; j < grid.cols(); ++j) {
            const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
            const int n = counts.n(ii, jj);
            if (n == 0) continue;
            const int x = counts.x(ii, jj);
            double pi = combo_toxicity(params, grid.a[i], grid.b[j]);
            if (clamp > 0.0) pi = std::clamp(pi, clamp, 1.0 - clamp);
            if (x > 0) ll += x * std::log(pi);
            if (n - x > 0) ll += (n - x) * std::log1p(-pi);
        }
    }
    return ll;
}

/// Clamp applied to pi inside posterior evaluations.
inline constexpr double kLikelihoodClamp = 1e-12;

inline double log_prior(const ToxicityParams& params, const ToxicityPriors& priors) {
    return priors.alpha.log_density(params.alpha) + priors.beta.log_density(params.beta) +
           priors.gamma.log_density(params.gamma);
}

/// Log posterior density of (alpha, beta, gamma), normalized priors included.
/// Returns -inf outside the positive orthant.
inline double log_posterior(const ToxicityParams& params, const DoseGrid& grid,
                            const ToxicityCounts& counts, const ToxicityPriors& priors) {
    if (!params.valid()) return -std::numeric_limits<double>::infinity();
    return log_likelihood(params, grid, counts, kLikelihoodClamp) + log_prior(params, priors);
}

inline double expit(double v) {
    return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

/// Logistic truth-generation surface used by the misspecification scenarios.
inline Matrix logistic_truth(const LogisticCoeffs& c) {
    Matrix out(static_cast<Eigen::Index>(c.zA.size()), static_cast<Eigen::Index>(c.zB.size()));
    for (std::size_t i = 0; i < c.zA.size(); ++i)
        for (std::size_t j = 0; j < c.zB.size(); ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                expit(c.b0 + c.b1 * c.zA[i] + c.b2 * c.zB[j] + c.b3 * c.zA[i] * c.zB[j]);
    return out;
}

}  // namespace combotrial
