#pragma once

// Trial events, their line-delimited JSON encoding, and the trial state
// obtained by folding them. Every state change in a trial is one of these
// events; the state is never edited directly.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "combotrial/design.hpp"
#include "combotrial/json_io.hpp"
#include "combotrial/randomization.hpp"

namespace combotrial {

inline constexpr const char* kEventSchema = "combotrial.events";
inline constexpr int kEventSchemaVersion = 1;

enum class DoseAction { Escalate, DeEscalate, Stay, Terminate };

inline const char* to_string(DoseAction a) {
    switch (a) {
        case DoseAction::Escalate: return "escalate";
        case DoseAction::DeEscalate: return "deescalate";
        case DoseAction::Stay: return "stay";
        case DoseAction::Terminate: return "terminate";
    }
    return "stay";
}

struct Created {
    std::string trial_id;
    std::uint64_t seed = 0;
    DesignConfig config;
};

struct Enrolled {
    int patient = 0;
    double time = 0.0;
    Combo combo;
    int phase = 1;
    int arm = -1;  // phase II arm, -1 in phase I
};

struct ToxicityObserved {
    int patient = 0;
    bool dlt = false;
    double time = 0.0;
};

struct EfficacyObserved {
    int patient = 0;
    bool response = false;
    double time = 0.0;
};

/// Phase I dose decision. `patients` and `dlts` are the running totals the
/// decision was based on; replay checks them against the folded state.
struct DoseDecision {
    DoseAction action = DoseAction::Stay;
    Combo from;
    Combo to;
    double prob_below = 0.0;
    int patients = 0;
    int dlts = 0;
};

struct AdmissibleSet {
    std::vector<Combo> arms;
    std::vector<double> prob_below;
    int patients = 0;
    int dlts = 0;
};

struct ArmClosed {
    int arm = 0;
    ClosureReason reason = ClosureReason::Toxicity;
    double statistic = 0.0;
};

struct ProbabilitiesUpdated {
    std::vector<double> probs;
    std::vector<int> order;
    std::vector<double> tox_prob_below;
    std::vector<double> eff_prob_exceeds;
    std::vector<double> eff_mean;
    int outcomes = 0;  // phase II efficacy outcomes adjudicated so far
    int patients = 0;
    int responders = 0;
};

struct Finished {
    std::optional<Combo> selected;
    std::string reason;
    double time = 0.0;
    std::vector<double> eff_mean;
};

using Event = std::variant<Created, Enrolled, ToxicityObserved, EfficacyObserved, DoseDecision, AdmissibleSet,
                           ArmClosed, ProbabilitiesUpdated, Finished>;

/// A log line that cannot be parsed or breaks a trial invariant.
class ReplayError : public std::runtime_error {
   public:
    explicit ReplayError(const std::string& what) : std::runtime_error(what) {}
};

// ---- JSON encoding --------------------------------------------------------

namespace io {

inline json combo_json(const Combo& c) { return json::array({c.i + 1, c.j + 1}); }

inline Combo combo_from(const json& j) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer())
        throw ReplayError("combination must be [a, b]");
    return {j[0].get<int>() - 1, j[1].get<int>() - 1};
}

template <class T>
T get(const json& j, const char* key) {
    if (!j.contains(key)) throw ReplayError(std::string("missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ReplayError(std::string("bad field '") + key + "'");
    }
}

}  // namespace io

inline json event_to_json(const Event& ev) {
    return std::visit(
        [](const auto& e) -> json {
            using T = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<T, Created>) {
                return {{"type", "create"}, {"trial", e.trial_id}, {"seed", e.seed}, {"config", to_json(e.config)}};
            } else if constexpr (std::is_same_v<T, Enrolled>) {
                json j{{"type", "enroll"}, {"patient", e.patient}, {"time", e.time},
                       {"combo", io::combo_json(e.combo)}, {"phase", e.phase}};
                if (e.arm >= 0) j["arm"] = e.arm + 1;
                return j;
            } else if constexpr (std::is_same_v<T, ToxicityObserved>) {
                return {{"type", "toxicity"}, {"patient", e.patient}, {"dlt", e.dlt}, {"time", e.time}};
            } else if constexpr (std::is_same_v<T, EfficacyObserved>) {
                return {{"type", "efficacy"}, {"patient", e.patient}, {"response", e.response}, {"time", e.time}};
            } else if constexpr (std::is_same_v<T, DoseDecision>) {
                return {{"type", "decision"},  {"action", to_string(e.action)}, {"from", io::combo_json(e.from)},
                        {"to", io::combo_json(e.to)}, {"prob_below", e.prob_below}, {"patients", e.patients},
                        {"dlts", e.dlts}};
            } else if constexpr (std::is_same_v<T, AdmissibleSet>) {
                json arms = json::array();
                for (const auto& c : e.arms) arms.push_back(io::combo_json(c));
                return {{"type", "admissible"}, {"arms", arms}, {"prob_below", e.prob_below},
                        {"patients", e.patients}, {"dlts", e.dlts}};
            } else if constexpr (std::is_same_v<T, ArmClosed>) {
                return {{"type", "closure"}, {"arm", e.arm + 1}, {"reason", to_string(e.reason)},
                        {"statistic", e.statistic}};
            } else if constexpr (std::is_same_v<T, ProbabilitiesUpdated>) {
                std::vector<int> order;
                for (int k : e.order) order.push_back(k + 1);
                return {{"type", "update"},
                        {"probs", e.probs},
                        {"order", order},
                        {"tox_prob_below", e.tox_prob_below},
                        {"eff_prob_exceeds", e.eff_prob_exceeds},
                        {"eff_mean", e.eff_mean},
                        {"outcomes", e.outcomes},
                        {"patients", e.patients},
                        {"responders", e.responders}};
            } else {
                json j{{"type", "finish"}, {"reason", e.reason}, {"time", e.time}, {"eff_mean", e.eff_mean}};
                j["selected"] = e.selected ? io::combo_json(*e.selected) : json(nullptr);
                return j;
            }
        },
        ev);
}

inline Event event_from_json(const json& j) {
    if (!j.is_object()) throw ReplayError("event must be an object");
    const auto type = io::get<std::string>(j, "type");
    if (type == "create") {
        Created e;
        e.trial_id = io::get<std::string>(j, "trial");
        e.seed = io::get<std::uint64_t>(j, "seed");
        if (!j.contains("config")) throw ReplayError("missing field 'config'");
        try {
            e.config = design_config_from_json(j["config"], "config");
        } catch (const std::exception& ex) {
            throw ReplayError(ex.what());
        }
        return e;
    }
    if (type == "enroll") {
        Enrolled e;
        e.patient = io::get<int>(j, "patient");
        e.time = io::get<double>(j, "time");
        if (!j.contains("combo")) throw ReplayError("missing field 'combo'");
        e.combo = io::combo_from(j["combo"]);
        e.phase = io::get<int>(j, "phase");
        e.arm = j.contains("arm") ? io::get<int>(j, "arm") - 1 : -1;
        return e;
    }
    if (type == "toxicity")
        return ToxicityObserved{io::get<int>(j, "patient"), io::get<bool>(j, "dlt"), io::get<double>(j, "time")};
    if (type == "efficacy")
        return EfficacyObserved{io::get<int>(j, "patient"), io::get<bool>(j, "response"), io::get<double>(j, "time")};
    if (type == "decision") {
        DoseDecision e;
        const auto a = io::get<std::string>(j, "action");
        if (a == "escalate") e.action = DoseAction::Escalate;
        else if (a == "deescalate") e.action = DoseAction::DeEscalate;
        else if (a == "stay") e.action = DoseAction::Stay;
        else if (a == "terminate") e.action = DoseAction::Terminate;
        else throw ReplayError("unknown decision action '" + a + "'");
        if (!j.contains("from") || !j.contains("to")) throw ReplayError("decision needs 'from' and 'to'");
        e.from = io::combo_from(j["from"]);
        e.to = io::combo_from(j["to"]);
        e.prob_below = io::get<double>(j, "prob_below");
        e.patients = io::get<int>(j, "patients");
        e.dlts = io::get<int>(j, "dlts");
        return e;
    }
    if (type == "admissible") {
        AdmissibleSet e;
        if (!j.contains("arms") || !j["arms"].is_array()) throw ReplayError("missing field 'arms'");
        for (const auto& c : j["arms"]) e.arms.push_back(io::combo_from(c));
        e.prob_below = io::get<std::vector<double>>(j, "prob_below");
        e.patients = io::get<int>(j, "patients");
        e.dlts = io::get<int>(j, "dlts");
        return e;
    }
    if (type == "closure") {
        ArmClosed e;
        e.arm = io::get<int>(j, "arm") - 1;
        const auto r = io::get<std::string>(j, "reason");
        if (r == "toxicity") e.reason = ClosureReason::Toxicity;
        else if (r == "futility") e.reason = ClosureReason::Futility;
        else throw ReplayError("unknown closure reason '" + r + "'");
        e.statistic = io::get<double>(j, "statistic");
        return e;
    }
    if (type == "update") {
        ProbabilitiesUpdated e;
        e.probs = io::get<std::vector<double>>(j, "probs");
        for (int k : io::get<std::vector<int>>(j, "order")) e.order.push_back(k - 1);
        e.tox_prob_below = io::get<std::vector<double>>(j, "tox_prob_below");
        e.eff_prob_exceeds = io::get<std::vector<double>>(j, "eff_prob_exceeds");
        e.eff_mean = io::get<std::vector<double>>(j, "eff_mean");
        e.outcomes = io::get<int>(j, "outcomes");
        e.patients = io::get<int>(j, "patients");
        e.responders = io::get<int>(j, "responders");
        return e;
    }
    if (type == "finish") {
        Finished e;
        e.reason = io::get<std::string>(j, "reason");
        e.time = io::get<double>(j, "time");
        e.eff_mean = io::get<std::vector<double>>(j, "eff_mean");
        if (!j.contains("selected")) throw ReplayError("missing field 'selected'");
        if (!j["selected"].is_null()) e.selected = io::combo_from(j["selected"]);
        return e;
    }
    throw ReplayError("unknown event type '" + type + "'");
}

inline json log_header() { return {{"schema", kEventSchema}, {"version", kEventSchemaVersion}}; }

inline void check_log_header(const json& j) {
    if (!j.is_object() || !j.contains("schema") || j["schema"] != kEventSchema)
        throw ReplayError("not a combotrial event log (bad schema header)");
    if (!j.contains("version") || j["version"] != kEventSchemaVersion)
        throw ReplayError("unsupported event log version");
}

// ---- Trial state ----------------------------------------------------------

struct PatientRecord {
    int id = 0;
    double entry = 0.0;
    Combo combo;
    int phase = 1;
    int arm = -1;
    std::optional<bool> dlt;
    std::optional<bool> response;
    double dlt_time = std::numeric_limits<double>::quiet_NaN();
    double response_time = std::numeric_limits<double>::quiet_NaN();
};

/// Everything known about one trial, reconstructed from its events.
struct TrialState {
    bool created = false;
    std::string trial_id;
    std::uint64_t seed = 0;
    DesignConfig config;

    Phase phase = Phase::PhaseOne;
    Combo current;
    ToxicityCounts tox;
    CountMatrix eff_n;  // adjudicated efficacy outcomes per combination
    CountMatrix eff_y;
    CountMatrix assigned;  // patients enrolled per combination
    std::vector<PatientRecord> patients;

    int phase1_enrolled = 0;
    int decided_through = 0;  // phase I patients covered by the latest dose decision
    std::vector<DoseDecision> decisions;

    std::vector<Combo> arms;
    std::vector<double> admissible_prob_below;
    std::vector<std::optional<ClosureReason>> closures;
    RandProbs probs;
    std::vector<ProbabilitiesUpdated> updates;
    int phase2_enrolled = 0;
    int phase2_adjudicated = 0;
    int outcomes_at_last_update = 0;

    double clock = 0.0;
    double first_entry = std::numeric_limits<double>::quiet_NaN();
    double last_outcome = std::numeric_limits<double>::quiet_NaN();
    int dlts = 0;
    int responders = 0;
    int outcomes_recorded = 0;  // toxicity plus efficacy records

    std::optional<Combo> selected;
    std::string finish_reason;
    std::vector<double> final_means;
    std::size_t events = 0;

    int enrolled() const { return static_cast<int>(patients.size()); }

    std::vector<std::size_t> open_arms() const {
        std::vector<std::size_t> out;
        for (std::size_t k = 0; k < arms.size(); ++k)
            if (!closures[k]) out.push_back(k);
        return out;
    }

    int pending_phase1_toxicity() const {
        int n = 0;
        for (const auto& p : patients)
            if (p.phase == 1 && !p.dlt) ++n;
        return n;
    }

    int pending_phase2_efficacy() const { return phase2_enrolled - phase2_adjudicated; }

    bool all_outcomes_in() const { return outcomes_recorded == 2 * enrolled(); }

    /// Efficacy tallies of the phase II arms (every adjudicated outcome at
    /// the arm's combination, phase I included).
    ArmData arm_data() const {
        ArmData d;
        for (const Combo& c : arms) {
            d.n.push_back(eff_n(c.i, c.j));
            d.y.push_back(eff_y(c.i, c.j));
        }
        return d;
    }

    const PatientRecord& patient(int id) const {
        if (id < 1 || id > enrolled()) throw ReplayError("unknown patient " + std::to_string(id));
        return patients[static_cast<std::size_t>(id - 1)];
    }

    void apply(const Event& ev) {
        std::visit([this](const auto& e) { this->on(e); }, ev);
        ++events;
    }

   private:
    static void require(bool ok, const std::string& what) {
        if (!ok) throw ReplayError(what);
    }

    bool in_grid(const Combo& c) const {
        return c.i >= 0 && c.j >= 0 && c.i < static_cast<int>(config.grid.rows()) &&
               c.j < static_cast<int>(config.grid.cols());
    }

    void advance_clock(double t, const char* what) {
        require(std::isfinite(t), std::string(what) + ": time must be finite");
        require(t >= clock, std::string(what) + ": time runs backwards");
        clock = t;
    }

    void on(const Created& e) {
        require(!created, "trial created twice");
        try {
            e.config.validate();
        } catch (const std::exception& ex) {
            throw ReplayError(std::string("invalid configuration: ") + ex.what());
        }
        created = true;
        trial_id = e.trial_id;
        seed = e.seed;
        config = e.config;
        const auto I = static_cast<Eigen::Index>(config.grid.rows()), J = static_cast<Eigen::Index>(config.grid.cols());
        tox = ToxicityCounts::zeros(config.grid.rows(), config.grid.cols());
        eff_n = CountMatrix::Zero(I, J);
        eff_y = CountMatrix::Zero(I, J);
        assigned = CountMatrix::Zero(I, J);
    }

    void on(const Enrolled& e) {
        require(created, "event before trial creation");
        require(phase != Phase::Finished, "enrollment after the trial finished");
        require(e.patient == enrolled() + 1, "patient ids must be consecutive");
        require(enrolled() < config.capacity(), "enrollment beyond n1 + n2");
        require(in_grid(e.combo), "enrollment outside the dose grid");
        advance_clock(e.time, "enroll");
        if (e.phase == 1) {
            require(phase == Phase::PhaseOne, "phase I enrollment outside phase I");
            require(phase1_enrolled < config.n1, "phase I enrollment beyond n1");
            require(phase1_enrolled - decided_through < config.cohort_size, "cohort enrolled before its decision");
            require(e.combo == current, "phase I patient not treated at the current combination");
            require(e.arm == -1, "phase I patient carries an arm");
            ++phase1_enrolled;
        } else {
            require(e.phase == 2, "phase must be 1 or 2");
            require(phase == Phase::PhaseTwo, "phase II enrollment outside phase II");
            require(phase2_enrolled < config.n2, "phase II enrollment beyond n2");
            require(e.arm >= 0 && e.arm < static_cast<int>(arms.size()), "phase II arm out of range");
            require(!closures[static_cast<std::size_t>(e.arm)], "assignment to a closed arm");
            require(arms[static_cast<std::size_t>(e.arm)] == e.combo, "arm and combination disagree");
            ++phase2_enrolled;
        }
        if (std::isnan(first_entry)) first_entry = e.time;
        assigned(e.combo.i, e.combo.j) += 1;
        patients.push_back({e.patient, e.time, e.combo, e.phase, e.arm, std::nullopt, std::nullopt,
                            std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()});
    }

    void on(const ToxicityObserved& e) {
        require(created, "event before trial creation");
        const auto& p = patient(e.patient);
        require(!p.dlt, "toxicity recorded twice for patient " + std::to_string(e.patient));
        require(e.time >= p.entry, "toxicity observed before enrollment");
        advance_clock(e.time, "toxicity");
        auto& rec = patients[static_cast<std::size_t>(e.patient - 1)];
        rec.dlt = e.dlt;
        rec.dlt_time = e.time;
        tox.n(rec.combo.i, rec.combo.j) += 1;
        if (e.dlt) {
            tox.x(rec.combo.i, rec.combo.j) += 1;
            ++dlts;
        }
        ++outcomes_recorded;
        last_outcome = e.time;
    }

    void on(const EfficacyObserved& e) {
        require(created, "event before trial creation");
        const auto& p = patient(e.patient);
        require(!p.response, "efficacy recorded twice for patient " + std::to_string(e.patient));
        require(e.time >= p.entry, "efficacy observed before enrollment");
        advance_clock(e.time, "efficacy");
        auto& rec = patients[static_cast<std::size_t>(e.patient - 1)];
        rec.response = e.response;
        rec.response_time = e.time;
        eff_n(rec.combo.i, rec.combo.j) += 1;
        if (e.response) {
            eff_y(rec.combo.i, rec.combo.j) += 1;
            ++responders;
        }
        if (rec.phase == 2) ++phase2_adjudicated;
        ++outcomes_recorded;
        last_outcome = e.time;
    }

    void on(const DoseDecision& e) {
        require(phase == Phase::PhaseOne, "dose decision outside phase I");
        require(e.from == current, "dose decision does not start from the current combination");
        require(in_grid(e.to), "dose decision leaves the grid");
        require(e.patients == phase1_enrolled, "dose decision patient count disagrees with the log");
        require(e.dlts == dlts, "dose decision DLT count disagrees with the log");
        require(pending_phase1_toxicity() == 0, "dose decision with toxicity outcomes pending");
        if (e.action == DoseAction::Escalate || e.action == DoseAction::DeEscalate) current = e.to;
        else require(e.to == e.from, "stay/terminate must not move the dose");
        decided_through = phase1_enrolled;
        decisions.push_back(e);
    }

    void on(const AdmissibleSet& e) {
        require(phase == Phase::PhaseOne, "admissible set outside phase I");
        require(phase1_enrolled == config.n1, "admissible set before n1 patients");
        require(e.patients == phase1_enrolled, "admissible set patient count disagrees with the log");
        require(e.dlts == dlts, "admissible set DLT count disagrees with the log");
        require(e.prob_below.size() == e.arms.size(), "admissible set: one probability per arm");
        for (const auto& c : e.arms) require(in_grid(c), "admissible combination outside the grid");
        decided_through = phase1_enrolled;
        arms = e.arms;
        admissible_prob_below = e.prob_below;
        closures.assign(arms.size(), std::nullopt);
        probs.probs.assign(arms.size(), 0.0);
        if (!arms.empty()) phase = Phase::PhaseTwo;
    }

    void on(const ArmClosed& e) {
        require(phase == Phase::PhaseTwo, "arm closure outside phase II");
        require(e.arm >= 0 && e.arm < static_cast<int>(arms.size()), "closure of an unknown arm");
        require(!closures[static_cast<std::size_t>(e.arm)], "arm closed twice");
        closures[static_cast<std::size_t>(e.arm)] = e.reason;
        probs.probs[static_cast<std::size_t>(e.arm)] = 0.0;
    }

    void on(const ProbabilitiesUpdated& e) {
        require(phase == Phase::PhaseTwo, "randomization update outside phase II");
        require(e.probs.size() == arms.size(), "update: one probability per arm");
        require(e.outcomes == phase2_adjudicated, "update outcome count disagrees with the log");
        require(e.patients == enrolled(), "update patient count disagrees with the log");
        require(e.responders == responders, "update responder count disagrees with the log");
        double sum = 0.0;
        for (std::size_t k = 0; k < arms.size(); ++k) {
            require(e.probs[k] >= 0.0, "negative randomization probability");
            require(!closures[k] || e.probs[k] == 0.0, "closed arm with positive probability");
            sum += e.probs[k];
        }
        require(std::abs(sum - 1.0) < 1e-9, "randomization probabilities do not sum to one");
        probs.probs = e.probs;
        probs.order.assign(e.order.begin(), e.order.end());
        outcomes_at_last_update = e.outcomes;
        updates.push_back(e);
    }

    void on(const Finished& e) {
        require(created, "event before trial creation");
        require(phase != Phase::Finished, "trial finished twice");
        if (e.selected) {
            bool open = false;
            for (std::size_t k = 0; k < arms.size(); ++k)
                if (arms[k] == *e.selected && !closures[k]) open = true;
            require(open, "selected combination is not an open arm");
        }
        phase = Phase::Finished;
        selected = e.selected;
        finish_reason = e.reason;
        final_means = e.eff_mean;
    }
};

inline TrialState fold(const std::vector<Event>& events) {
    TrialState s;
    for (const auto& e : events) s.apply(e);
    return s;
}

/// Parses a log (schema header then one event per line) and folds it.
/// Errors carry the 1-based line number. A missing trailing newline is fine.
struct ParsedLog {
    std::vector<Event> events;
    TrialState state;
};

inline ParsedLog parse_log(std::istream& in) {
    ParsedLog out;
    std::string line;
    int line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            if (!header) {
                check_log_header(j);
                header = true;
                continue;
            }
            Event ev = event_from_json(j);
            out.state.apply(ev);
            out.events.push_back(std::move(ev));
        } catch (const json::exception& e) {
            throw ReplayError("line " + std::to_string(line_no) + ": " + e.what());
        } catch (const ReplayError& e) {
            throw ReplayError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!header) throw ReplayError("line 1: empty log");
    return out;
}

/// Snapshot of a state as JSON; used for status payloads and replay reports.
inline json state_to_json(const TrialState& s) {
    json arms = json::array();
    for (std::size_t k = 0; k < s.arms.size(); ++k) {
        json a{{"arm", k + 1},
               {"combo", io::combo_json(s.arms[k])},
               {"open", !s.closures[k]},
               {"prob", k < s.probs.probs.size() ? s.probs.probs[k] : 0.0},
               {"efficacy_n", s.eff_n(s.arms[k].i, s.arms[k].j)},
               {"efficacy_y", s.eff_y(s.arms[k].i, s.arms[k].j)}};
        if (s.closures[k]) a["closed_for"] = to_string(*s.closures[k]);
        arms.push_back(a);
    }
    json history = json::array();
    for (const auto& u : s.updates) history.push_back({{"outcomes", u.outcomes}, {"patients", u.patients}, {"probs", u.probs}});
    json j{{"trial", s.trial_id},
           {"phase", to_string(s.phase)},
           {"current", io::combo_json(s.current)},
           {"enrolled", s.enrolled()},
           {"phase1_enrolled", s.phase1_enrolled},
           {"phase2_enrolled", s.phase2_enrolled},
           {"capacity", s.config.capacity()},
           {"patients", io::matrix_json(s.assigned)},
           {"toxicity_n", io::matrix_json(s.tox.n)},
           {"toxicity_x", io::matrix_json(s.tox.x)},
           {"efficacy_n", io::matrix_json(s.eff_n)},
           {"efficacy_y", io::matrix_json(s.eff_y)},
           {"pending_phase1_toxicity", s.pending_phase1_toxicity()},
           {"pending_phase2_efficacy", s.pending_phase2_efficacy()},
           {"arms", arms},
           {"probability_history", history},
           {"clock", s.clock},
           {"events", s.events}};
    j["selected"] = s.selected ? io::combo_json(*s.selected) : json(nullptr);
    if (s.phase == Phase::Finished) j["finish_reason"] = s.finish_reason;
    return j;
}

}  // namespace combotrial
