#pragma once

// Replicated trial simulation. Replicate r always runs with seed
// derive_seed(master_seed, r) and results are reduced in replicate order, so
// the output does not depend on the number of worker threads.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

#include "combotrial/design.hpp"
#include "combotrial/efficacy.hpp"
#include "combotrial/randomization.hpp"
#include "combotrial/rng.hpp"
#include "combotrial/trial_engine.hpp"

namespace combotrial {

/// Runs body(r) for r in [0, n) on `parallelism` threads (0 = hardware).
inline void parallel_for(std::size_t n, unsigned parallelism, const std::function<void(std::size_t)>& body) {
    unsigned workers = parallelism == 0 ? std::max(1u, std::thread::hardware_concurrency()) : parallelism;
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(n, 1)));
    if (workers <= 1) {
        for (std::size_t r = 0; r < n; ++r) body(r);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t r = next++; r < n; r = next++) {
                try {
                    body(r);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    next = n;
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

/// Neumaier compensated sum.
class Accumulator {
   public:
    void add(double v) {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v)) comp_ += (sum_ - t) + v;
        else comp_ += (v - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

   private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

struct OperatingCharacteristics {
    std::size_t reps = 0;
    Matrix selection_pct;   // per combination
    Matrix mean_patients;   // per combination, both phases
    Matrix admissible_pct;  // how often each combination entered phase II
    Matrix mean_dlts;
    double no_selection_pct = 0.0;
    double early_termination_pct = 0.0;  // stopped before phase II
    double mean_admissible_size = 0.0;
    double mean_enrolled = 0.0;
    double mean_duration = 0.0;
    double duration_q10 = 0.0;
    double duration_q50 = 0.0;
    double duration_q90 = 0.0;
};

/// Empirical quantile, type 7 (linear interpolation between order statistics).
inline double quantile(std::vector<double> v, double q) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const double h = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline OperatingCharacteristics summarize(const std::vector<TrialResult>& results, std::size_t rows, std::size_t cols) {
    if (results.empty()) throw std::invalid_argument("summarize: no replicates");
    const auto I = static_cast<Eigen::Index>(rows), J = static_cast<Eigen::Index>(cols);
    std::vector<Accumulator> sel(rows * cols), pat(rows * cols), adm(rows * cols), dlt(rows * cols);
    Accumulator none, early, adm_size, enrolled, duration;
    std::vector<double> durations;
    durations.reserve(results.size());
    for (const TrialResult& r : results) {
        for (Eigen::Index i = 0; i < I; ++i)
            for (Eigen::Index j = 0; j < J; ++j) {
                const auto c = static_cast<std::size_t>(i * J + j);
                pat[c].add(r.patients(i, j));
                dlt[c].add(r.dlts(i, j));
                sel[c].add(r.selected && r.selected->i == i && r.selected->j == j ? 1.0 : 0.0);
            }
        for (const Combo& c : r.admissible) adm[static_cast<std::size_t>(c.i * J + c.j)].add(1.0);
        none.add(r.selected ? 0.0 : 1.0);
        early.add(r.terminated_in_phase_one ? 1.0 : 0.0);
        adm_size.add(static_cast<double>(r.admissible.size()));
        enrolled.add(r.enrolled);
        duration.add(r.duration);
        durations.push_back(r.duration);
    }
    const double n = static_cast<double>(results.size());
    OperatingCharacteristics oc;
    oc.reps = results.size();
    oc.selection_pct.resize(I, J);
    oc.mean_patients.resize(I, J);
    oc.admissible_pct.resize(I, J);
    oc.mean_dlts.resize(I, J);
    for (Eigen::Index i = 0; i < I; ++i)
        for (Eigen::Index j = 0; j < J; ++j) {
            const auto c = static_cast<std::size_t>(i * J + j);
            oc.selection_pct(i, j) = 100.0 * sel[c].value() / n;
            oc.mean_patients(i, j) = pat[c].value() / n;
            oc.admissible_pct(i, j) = 100.0 * adm[c].value() / n;
            oc.mean_dlts(i, j) = dlt[c].value() / n;
        }
    oc.no_selection_pct = 100.0 * none.value() / n;
    oc.early_termination_pct = 100.0 * early.value() / n;
    oc.mean_admissible_size = adm_size.value() / n;
    oc.mean_enrolled = enrolled.value() / n;
    oc.mean_duration = duration.value() / n;
    oc.duration_q10 = quantile(durations, 0.1);
    oc.duration_q50 = quantile(durations, 0.5);
    oc.duration_q90 = quantile(durations, 0.9);
    return oc;
}

/// Simulates `n_reps` trials. When `raw` is given it receives every
/// replicate's result in replicate order.
inline OperatingCharacteristics run_oc(const Scenario& scenario, const DesignConfig& config, std::size_t n_reps,
                                       std::uint64_t master_seed, unsigned parallelism = 1,
                                       std::vector<TrialResult>* raw = nullptr) {
    if (n_reps < 1) throw std::invalid_argument("run_oc: n_reps must be at least 1");
    config.validate();
    scenario.validate(config.grid);
    std::vector<TrialResult> results(n_reps);
    parallel_for(n_reps, parallelism,
                 [&](std::size_t r) { results[r] = run_trial(scenario, config, derive_seed(master_seed, r)); });
    OperatingCharacteristics oc = summarize(results, config.grid.rows(), config.grid.cols());
    if (raw) *raw = std::move(results);
    return oc;
}

// ---- Randomization-only harness ---------------------------------------------

struct ArOnlyConfig {
    int n_patients = 100;
    RandomizationScheme scheme = RandomizationScheme::MAR;
    std::size_t reference_arm = 0;  // FAR only
    McmcConfig mcmc;
    EfficacyModel model;
};

struct ArOnlyResult {
    std::size_t reps = 0;
    std::vector<double> mean_allocation;  // patients per arm
    std::vector<double> sd_allocation;
    Matrix mean_probs;  // n_patients x K: probabilities used for patient t
    std::vector<std::vector<int>> allocations;  // per replicate
};

/// Randomizes `n_patients` among arms with the given true response rates,
/// refitting the efficacy model and the AR probabilities before every patient
/// and observing each outcome immediately.
inline ArOnlyResult run_ar_only(const std::vector<double>& rates, std::size_t n_reps, std::uint64_t master_seed,
                                const ArOnlyConfig& cfg = {}, unsigned parallelism = 1) {
    if (rates.empty()) throw std::invalid_argument("run_ar_only: at least one arm is required");
    for (double p : rates)
        if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("run_ar_only: rates must lie in [0,1]");
    if (n_reps < 1) throw std::invalid_argument("run_ar_only: n_reps must be at least 1");
    if (cfg.n_patients < 1) throw std::invalid_argument("run_ar_only: n_patients must be positive");
    if (cfg.reference_arm >= rates.size()) throw std::invalid_argument("run_ar_only: reference arm out of range");
    cfg.mcmc.validate();

    const std::size_t K = rates.size();
    const auto T = static_cast<std::size_t>(cfg.n_patients);
    std::vector<std::size_t> all(K);
    for (std::size_t k = 0; k < K; ++k) all[k] = k;

    std::vector<std::vector<int>> alloc(n_reps);
    std::vector<std::vector<double>> traj(n_reps);  // T*K per replicate
    parallel_for(n_reps, parallelism, [&](std::size_t r) {
        const std::uint64_t seed = derive_seed(master_seed, r);
        Rng rng(derive_seed(seed, kOutcomeStream));
        ArmData data{std::vector<int>(K, 0), std::vector<int>(K, 0)};
        auto& tr = traj[r];
        tr.assign(T * K, 0.0);
        for (std::size_t t = 0; t < T; ++t) {
            const EffPosteriorChain chain = sample_efficacy_posterior(data, cfg.mcmc, derive_seed(seed, t), cfg.model);
            const RandProbs rp = cfg.scheme == RandomizationScheme::MAR
                                     ? mar_probabilities(chain, all)
                                     : far_probabilities(chain, all, cfg.reference_arm);
            for (std::size_t k = 0; k < K; ++k) tr[t * K + k] = rp.probs[k];
            const std::size_t arm = draw_assignment(rp, rng);
            data.n[arm] += 1;
            if (bernoulli(rng, rates[arm])) data.y[arm] += 1;
        }
        alloc[r] = data.n;
    });

    ArOnlyResult out;
    out.reps = n_reps;
    out.mean_allocation.assign(K, 0.0);
    out.sd_allocation.assign(K, 0.0);
    out.mean_probs = Matrix::Zero(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(K));
    const double n = static_cast<double>(n_reps);
    for (std::size_t k = 0; k < K; ++k) {
        Accumulator s, s2;
        for (std::size_t r = 0; r < n_reps; ++r) {
            s.add(alloc[r][k]);
            s2.add(static_cast<double>(alloc[r][k]) * alloc[r][k]);
        }
        out.mean_allocation[k] = s.value() / n;
        out.sd_allocation[k] = n > 1 ? std::sqrt(std::max(0.0, (s2.value() - n * out.mean_allocation[k] * out.mean_allocation[k]) / (n - 1))) : 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            Accumulator p;
            for (std::size_t r = 0; r < n_reps; ++r) p.add(traj[r][t * K + k]);
            out.mean_probs(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) = p.value() / n;
        }
    }
    out.allocations = std::move(alloc);
    return out;
}

}  // namespace combotrial
