#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

#include <boost/random/exponential_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

namespace combotrial {

/// Engine used everywhere. std::mt19937_64 output is specified bit-for-bit by
/// the standard; the boost distributions below are portable across platforms,
/// unlike the std:: ones.
using Rng = std::mt19937_64;

/// SplitMix64 finalizer (Steele, Lea, Flood 2014).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Seed of stream `index` under `master`. Distinct indices give decorrelated
/// streams; the result depends on nothing but the two arguments.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
    return mix64(master ^ mix64(index * 0xD1B54A32D192ED03ULL + 1));
}

inline double uniform01(Rng& rng) {
    return boost::random::uniform_01<double>{}(rng);
}

/// Uniform on the open interval (0,1).
inline double uniform_open(Rng& rng) {
    for (;;) {
        const double u = uniform01(rng);
        if (u > 0.0) return u;
    }
}

inline double standard_normal(Rng& rng) {
    return boost::random::normal_distribution<double>{0.0, 1.0}(rng);
}

inline double exponential(Rng& rng, double rate) {
    return boost::random::exponential_distribution<double>{rate}(rng);
}

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

/// log of a Ga(shape, 1) draw by Marsaglia and Tsang's squeeze method (much
/// faster than boost's gamma_distribution in the Gibbs inner loop). Shapes
/// below one use G(a) = G(a+1) U^(1/a) on the log scale so tiny shapes never
/// underflow.
inline double log_gamma_variate(Rng& rng, double shape) {
    const bool boost_shape = shape < 1.0;
    const double a = boost_shape ? shape + 1.0 : shape;
    const double d = a - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    double log_g;
    for (;;) {
        double x, v;
        do {
            x = standard_normal(rng);
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform_open(rng);
        const double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2 || std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) {
            log_g = std::log(d) + std::log(v);
            break;
        }
    }
    if (boost_shape) log_g += std::log(uniform_open(rng)) / shape;
    return log_g;
}

/// A Beta(a, b) draw carried with its logs so that log p and log(1-p) stay
/// finite even when p rounds to 0 or 1.
struct BetaDraw {
    double value;
    double log_value;
    double log_complement;
};

inline BetaDraw beta_variate(Rng& rng, double a, double b) {
    const double lx = log_gamma_variate(rng, a);
    const double ly = log_gamma_variate(rng, b);
    const double m = std::max(lx, ly);
    const double lse = m + std::log(std::exp(lx - m) + std::exp(ly - m));
    const double log_p = lx - lse;
    const double log_q = ly - lse;
    return {std::exp(log_p), log_p, log_q};
}

}  // namespace combotrial
