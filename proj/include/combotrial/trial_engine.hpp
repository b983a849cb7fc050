#pragma once

// The two-phase trial state machine. Decision rules are free functions of
// (state, posterior chains); TrialEngine sequences them, emits events, and
// enforces the enrollment gate. run_trial drives an engine against a
// simulated patient stream.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "combotrial/design.hpp"
#include "combotrial/efficacy.hpp"
#include "combotrial/events.hpp"
#include "combotrial/posterior.hpp"
#include "combotrial/randomization.hpp"
#include "combotrial/rng.hpp"

namespace combotrial {

// ---- Decision rules -------------------------------------------------------

struct Phase1Decision {
    DoseAction action = DoseAction::Stay;
    Combo to;
    double prob_below = 0.0;
};

inline Phase1Decision phase1_decision(const TrialState& state, const ToxPosteriorChain& chain) {
    const DesignConfig& cfg = state.config;
    const Combo cur = state.current;
    const int I = static_cast<int>(cfg.grid.rows()), J = static_cast<int>(cfg.grid.cols());
    const auto mean = [&](Combo c) {
        return posterior_mean_toxicity(chain, static_cast<std::size_t>(c.i), static_cast<std::size_t>(c.j));
    };
    Phase1Decision d;
    d.to = cur;
    d.prob_below = prob_below(chain, static_cast<std::size_t>(cur.i), static_cast<std::size_t>(cur.j), cfg.phi_t);
    const double here = mean(cur);

    // Among `cands` passing `keep`, the one whose mean is closest to phi_T.
    const auto closest = [&](const std::vector<Combo>& cands, auto keep) -> std::optional<Combo> {
        std::optional<Combo> best;
        double best_gap = std::numeric_limits<double>::infinity();
        for (const Combo& c : cands) {
            const double m = mean(c);
            if (!keep(m)) continue;
            const double gap = std::abs(m - cfg.phi_t);
            if (gap < best_gap) {
                best_gap = gap;
                best = c;
            }
        }
        return best;
    };

    if (d.prob_below > cfg.c_e) {
        if (auto to = closest(candidate_escalation_set(cur, I, J), [&](double m) { return m > here; })) {
            d.action = DoseAction::Escalate;
            d.to = *to;
        }
        return d;
    }
    if (d.prob_below < cfg.c_d) {
        const auto cands = candidate_deescalation_set(cur, I, J);
        if (cands.empty()) {
            d.action = DoseAction::Terminate;
            return d;
        }
        auto to = closest(cands, [&](double m) { return m < here; });
        if (!to) {
            to = cands.front();
            for (const Combo& c : cands)
                if (mean(c) < mean(*to)) to = c;
        }
        d.action = DoseAction::DeEscalate;
        d.to = *to;
    }
    return d;
}

struct AdmissibleChoice {
    std::vector<Combo> arms;  // row-major grid order
    std::vector<double> prob_below;
};

inline AdmissibleChoice select_admissible(const TrialState& state, const ToxPosteriorChain& chain) {
    const DesignConfig& cfg = state.config;
    struct Cand {
        Combo c;
        double pb;
        double gap;
    };
    std::vector<Cand> cands;
    for (std::size_t i = 0; i < cfg.grid.rows(); ++i)
        for (std::size_t j = 0; j < cfg.grid.cols(); ++j) {
            const double pb = prob_below(chain, i, j, cfg.phi_t);
            if (pb > cfg.c_a)
                cands.push_back({{static_cast<int>(i), static_cast<int>(j)}, pb,
                                 std::abs(posterior_mean_toxicity(chain, i, j) - cfg.phi_t)});
        }
    if (cfg.admissible_cap > 0 && static_cast<int>(cands.size()) > cfg.admissible_cap) {
        std::stable_sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) { return x.gap < y.gap; });
        cands.resize(static_cast<std::size_t>(cfg.admissible_cap));
        std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) { return x.c < y.c; });
    }
    AdmissibleChoice out;
    for (const auto& c : cands) {
        out.arms.push_back(c.c);
        out.prob_below.push_back(c.pb);
    }
    return out;
}

/// Closures and refreshed randomization probabilities for one phase II
/// update. `update` is empty when every arm ends up closed.
struct Phase2Step {
    std::vector<ArmClosed> closures;
    std::optional<ProbabilitiesUpdated> update;
    std::vector<double> tox_prob_below;
    std::vector<double> eff_prob_exceeds;
    std::vector<double> eff_mean;

    bool stopped() const { return !update; }
};

inline Phase2Step phase2_update(const TrialState& state, const ToxPosteriorChain& tox, const EffPosteriorChain& eff) {
    const DesignConfig& cfg = state.config;
    const std::size_t K = state.arms.size();
    if (eff.arms() != K) throw std::invalid_argument("phase2_update: efficacy chain does not cover every arm");
    Phase2Step out;
    std::vector<std::size_t> open;
    for (std::size_t k = 0; k < K; ++k) {
        const Combo c = state.arms[k];
        const double pb = prob_below(tox, static_cast<std::size_t>(c.i), static_cast<std::size_t>(c.j), cfg.phi_t);
        const double pe = prob_exceeds(eff, k, cfg.phi_e);
        out.tox_prob_below.push_back(pb);
        out.eff_prob_exceeds.push_back(pe);
        out.eff_mean.push_back(posterior_mean(eff, k));
        if (state.closures[k]) continue;
        if (pb < cfg.c_a) out.closures.push_back({static_cast<int>(k), ClosureReason::Toxicity, pb});
        else if (pe < cfg.c_f) out.closures.push_back({static_cast<int>(k), ClosureReason::Futility, pe});
        else open.push_back(k);
    }
    if (open.empty()) return out;

    RandProbs rp;
    if (cfg.scheme == RandomizationScheme::MAR) {
        rp = mar_probabilities(eff, open);
    } else {
        const bool ref_open = std::find(open.begin(), open.end(), cfg.far_reference) != open.end();
        rp = far_probabilities(eff, open, ref_open ? cfg.far_reference : open.front());
    }
    ProbabilitiesUpdated u;
    u.probs = rp.probs;
    for (std::size_t k : rp.order) u.order.push_back(static_cast<int>(k));
    u.tox_prob_below = out.tox_prob_below;
    u.eff_prob_exceeds = out.eff_prob_exceeds;
    u.eff_mean = out.eff_mean;
    u.outcomes = state.phase2_adjudicated;
    u.patients = state.enrolled();
    u.responders = state.responders;
    out.update = std::move(u);
    return out;
}

inline TrialResult result_of(const TrialState& s) {
    TrialResult r;
    r.selected = s.selected;
    r.reason = s.finish_reason;
    r.patients = s.assigned;
    r.dlts = s.tox.x;
    r.admissible = s.arms;
    r.enrolled = s.enrolled();
    r.terminated_in_phase_one = s.phase == Phase::Finished && s.arms.empty();
    if (!std::isnan(s.first_entry) && !std::isnan(s.last_outcome)) r.duration = s.last_outcome - s.first_entry;
    return r;
}

/// Highest posterior mean efficacy among open arms; ties go to the lower arm.
inline TrialResult final_selection(const TrialState& state, const EffPosteriorChain& eff) {
    TrialResult r = result_of(state);
    std::optional<std::size_t> best;
    double best_mean = -1.0;
    for (std::size_t k = 0; k < state.arms.size(); ++k) {
        if (state.closures[k]) continue;
        const double m = posterior_mean(eff, k);
        if (m > best_mean) {
            best_mean = m;
            best = k;
        }
    }
    r.selected = best ? std::optional<Combo>(state.arms[*best]) : std::nullopt;
    r.reason = best ? "selected highest posterior mean efficacy" : "all arms closed";
    return r;
}

// ---- Engine ---------------------------------------------------------------

enum class Gate { Open, AwaitingToxicity, AwaitingEfficacy, Full, Finished };

inline const char* to_string(Gate g) {
    switch (g) {
        case Gate::Open: return "open";
        case Gate::AwaitingToxicity: return "awaiting_toxicity";
        case Gate::AwaitingEfficacy: return "awaiting_efficacy";
        case Gate::Full: return "full";
        case Gate::Finished: return "finished";
    }
    return "finished";
}

enum class EngineErrc { Suspended, Full, Finished, UnknownPatient, Duplicate, BadTime };

class EngineError : public std::runtime_error {
   public:
    EngineError(EngineErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    EngineErrc code() const { return code_; }

   private:
    EngineErrc code_;
};

inline constexpr std::uint64_t kAssignmentStream = 0x41535349474E4D54ULL;
inline constexpr std::uint64_t kOutcomeStream = 0x4F5554434F4D4553ULL;

class TrialEngine {
   public:
    using Sink = std::function<void(const Event&)>;

    static TrialEngine create(const DesignConfig& config, std::uint64_t seed, const std::string& trial_id = "trial",
                              Sink sink = {}) {
        config.validate();
        TrialEngine e;
        e.sink_ = std::move(sink);
        e.emit(Created{trial_id, seed, config});
        return e;
    }

    /// Rebuilds an engine from a log. The log is trusted only as far as the
    /// fold's invariant checks go.
    static TrialEngine restore(std::vector<Event> events, Sink sink = {}) {
        TrialEngine e;
        for (const auto& ev : events) e.state_.apply(ev);
        e.log_ = std::move(events);
        e.sink_ = std::move(sink);
        return e;
    }

    const TrialState& state() const { return state_; }
    const std::vector<Event>& log() const { return log_; }
    void keep_log(bool keep) { keep_log_ = keep; }

    Gate gate() const {
        const TrialState& s = state_;
        const DesignConfig& c = s.config;
        switch (s.phase) {
            case Phase::Finished: return Gate::Finished;
            case Phase::PhaseOne:
                if (s.phase1_enrolled < c.n1 && s.phase1_enrolled - s.decided_through < c.cohort_size)
                    return Gate::Open;
                return Gate::AwaitingToxicity;
            case Phase::PhaseTwo:
                if (s.phase2_enrolled >= c.n2) return Gate::Full;
                if (s.pending_phase2_efficacy() >= c.group_size) return Gate::AwaitingEfficacy;
                return Gate::Open;
        }
        return Gate::Finished;
    }

    /// Enrolls the next patient at `time` and returns their record.
    const PatientRecord& enroll(double time) {
        check_time(time);
        switch (gate()) {
            case Gate::Open: break;
            case Gate::Finished: throw EngineError(EngineErrc::Finished, "trial has finished");
            case Gate::Full: throw EngineError(EngineErrc::Full, "enrollment is complete (n1 + n2 reached)");
            case Gate::AwaitingToxicity:
                throw EngineError(EngineErrc::Suspended, "accrual suspended until pending toxicity outcomes are recorded");
            case Gate::AwaitingEfficacy:
                throw EngineError(EngineErrc::Suspended, "accrual suspended until pending efficacy outcomes are recorded");
        }
        const int id = state_.enrolled() + 1;
        if (state_.phase == Phase::PhaseOne) {
            emit(Enrolled{id, time, state_.current, 1, -1});
        } else {
            Rng rng(derive_seed(state_.seed ^ kAssignmentStream, static_cast<std::uint64_t>(id)));
            const std::size_t arm = draw_assignment(state_.probs, rng);
            emit(Enrolled{id, time, state_.arms[arm], 2, static_cast<int>(arm)});
        }
        return state_.patients.back();
    }

    void record_toxicity(int patient, bool dlt, double time) {
        const PatientRecord& p = lookup(patient);
        if (p.dlt) throw EngineError(EngineErrc::Duplicate, "toxicity already recorded for patient " + std::to_string(patient));
        check_time(time);
        emit(ToxicityObserved{patient, dlt, time});
        advance(time);
    }

    void record_efficacy(int patient, bool response, double time) {
        const PatientRecord& p = lookup(patient);
        if (p.response)
            throw EngineError(EngineErrc::Duplicate, "efficacy already recorded for patient " + std::to_string(patient));
        check_time(time);
        emit(EfficacyObserved{patient, response, time});
        advance(time);
    }

    /// Stops the trial now. In phase II the final analysis runs on the data
    /// recorded so far.
    void finalize(double time) {
        check_time(time);
        if (state_.phase == Phase::Finished) throw EngineError(EngineErrc::Finished, "trial has finished");
        if (state_.phase == Phase::PhaseOne) {
            emit(Finished{std::nullopt, "stopped during phase I", time, {}});
            return;
        }
        refresh(time, nullptr, true);
    }

    /// Runs any automatic step the log stops short of, e.g. after a crash
    /// between an outcome and the decision it triggers. Seeds depend only on
    /// the event count, so the result matches an uninterrupted run.
    void resume() {
        if (state_.created && state_.phase != Phase::Finished) advance(state_.clock);
    }

   private:
    TrialState state_;
    std::vector<Event> log_;
    Sink sink_;
    bool keep_log_ = true;

    void emit(Event ev) {
        state_.apply(ev);
        if (sink_) sink_(ev);
        if (keep_log_) log_.push_back(std::move(ev));
    }

    void check_time(double time) const {
        if (!std::isfinite(time) || time < state_.clock)
            throw EngineError(EngineErrc::BadTime, "event time precedes the trial clock");
    }

    const PatientRecord& lookup(int patient) const {
        if (patient < 1 || patient > state_.enrolled())
            throw EngineError(EngineErrc::UnknownPatient, "unknown patient " + std::to_string(patient));
        return state_.patients[static_cast<std::size_t>(patient - 1)];
    }

    std::uint64_t next_seed() const { return derive_seed(state_.seed, static_cast<std::uint64_t>(state_.events)); }

    ToxPosteriorChain fit_toxicity() const {
        return sample_toxicity_posterior(state_.tox, state_.config.grid, state_.config.tox_priors, state_.config.mcmc,
                                         next_seed());
    }

    void advance(double time) {
        const TrialState& s = state_;
        const DesignConfig& c = s.config;
        if (s.phase == Phase::PhaseOne) {
            const int pending = s.phase1_enrolled - s.decided_through;
            const bool cohort_done = pending >= c.cohort_size || (pending > 0 && s.phase1_enrolled == c.n1);
            if (!cohort_done || s.pending_phase1_toxicity() > 0) return;
            const ToxPosteriorChain chain = fit_toxicity();
            if (s.phase1_enrolled == c.n1) {
                enter_phase_two(chain, time);
                return;
            }
            const Phase1Decision d = phase1_decision(s, chain);
            emit(DoseDecision{d.action, s.current, d.to, d.prob_below, s.phase1_enrolled, s.dlts});
            if (d.action == DoseAction::Terminate)
                emit(Finished{std::nullopt, "lowest combination too toxic; terminated in phase I", time, {}});
            return;
        }
        if (s.phase == Phase::PhaseTwo) {
            const bool complete = s.phase2_enrolled >= c.n2 && s.pending_phase2_efficacy() == 0;
            if (complete) refresh(time, nullptr, true);
            else if (s.phase2_adjudicated - s.outcomes_at_last_update >= c.group_size) refresh(time, nullptr, false);
        }
    }

    void enter_phase_two(const ToxPosteriorChain& chain, double time) {
        const AdmissibleChoice adm = select_admissible(state_, chain);
        emit(AdmissibleSet{adm.arms, adm.prob_below, state_.phase1_enrolled, state_.dlts});
        if (adm.arms.empty()) {
            emit(Finished{std::nullopt, "no admissible combination", time, {}});
            return;
        }
        refresh(time, &chain, false);
    }

    /// Refits both models, applies closures, and either publishes new
    /// randomization probabilities or (when `final` or no arm is left)
    /// finishes the trial.
    void refresh(double time, const ToxPosteriorChain* tox_in, bool final) {
        std::optional<ToxPosteriorChain> own;
        if (!tox_in) own = fit_toxicity();
        const ToxPosteriorChain& tox = tox_in ? *tox_in : *own;
        const EffPosteriorChain eff = sample_efficacy_posterior(
            state_.arm_data(), state_.config.mcmc, derive_seed(next_seed(), 1), state_.config.eff_model);
        Phase2Step step = phase2_update(state_, tox, eff);
        for (const auto& cl : step.closures) emit(cl);
        if (step.stopped()) {
            emit(Finished{std::nullopt, "all arms closed", time, step.eff_mean});
            return;
        }
        emit(std::move(*step.update));
        if (!final) return;
        const TrialResult r = final_selection(state_, eff);
        emit(Finished{r.selected, r.reason, time, step.eff_mean});
    }
};

// ---- Simulation driver ----------------------------------------------------

/// Runs one simulated trial. Patients arrive as a Poisson stream; a patient
/// arriving while accrual is suspended waits and enrolls when it reopens.
/// Toxicity is recorded at enrollment; efficacy when its adjudication time
/// comes due. Outcomes still pending when the trial finishes are drained so
/// the duration covers every enrolled patient's follow-up.
inline TrialResult run_trial(const Scenario& scenario, const DesignConfig& config, std::uint64_t seed,
                             std::vector<Event>* events = nullptr) {
    config.validate();
    scenario.validate(config.grid);
    TrialEngine engine = TrialEngine::create(config, seed, scenario.name);
    engine.keep_log(events != nullptr);
    Rng rng(derive_seed(seed, kOutcomeStream));

    struct Due {
        double time;
        int patient;
        bool response;
        bool operator>(const Due& o) const { return time > o.time || (time == o.time && patient > o.patient); }
    };
    std::priority_queue<Due, std::vector<Due>, std::greater<>> pending;
    auto deliver = [&] {
        const Due d = pending.top();
        pending.pop();
        engine.record_efficacy(d.patient, d.response, std::max(d.time, engine.state().clock));
    };

    double arrival = exponential(rng, config.accrual_rate);
    while (engine.gate() != Gate::Finished) {
        if (engine.gate() == Gate::Open) {
            const double t = std::max(arrival, engine.state().clock);
            if (!pending.empty() && pending.top().time <= t) {
                deliver();
                continue;
            }
            const PatientRecord& p = engine.enroll(t);
            const int id = p.id;
            const Combo c = p.combo;
            const bool dlt = bernoulli(rng, scenario.toxicity(c.i, c.j));
            const bool resp = bernoulli(rng, scenario.efficacy(c.i, c.j));
            const double dt = sample_outcome_times(resp, scenario.time_to_efficacy, config.assess_window, rng);
            pending.push({t + dt, id, resp});
            engine.record_toxicity(id, dlt, t);
            arrival += exponential(rng, config.accrual_rate);
        } else {
            if (pending.empty()) throw std::logic_error("run_trial: engine is waiting with no outcome pending");
            deliver();
        }
    }
    while (!pending.empty()) deliver();
    if (events) *events = engine.log();
    return result_of(engine.state());
}

}  // namespace combotrial
