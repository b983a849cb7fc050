#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "combotrial/events.hpp"
#include "combotrial/scenarios.hpp"
#include "combotrial/trial_engine.hpp"

using namespace combotrial;

namespace {

DesignConfig quick_config() {
    DesignConfig c;
    c.mcmc.n_keep = 300;
    c.mcmc.n_burn = 100;
    c.assess_window = 3.0;
    c.group_size = 4;
    return c;
}

std::vector<Event> trial_log(int scenario, std::uint64_t seed) {
    std::vector<Event> log;
    run_trial(reference_scenario(scenario).scenario, quick_config(), seed, &log);
    return log;
}

std::vector<std::string> to_lines(const std::vector<Event>& log) {
    std::vector<std::string> lines{log_header().dump()};
    for (const Event& e : log) lines.push_back(event_to_json(e).dump());
    return lines;
}

std::string join(const std::vector<std::string>& lines) {
    std::string s;
    for (const auto& l : lines) s += l + "\n";
    return s;
}

ParsedLog parse(const std::string& text) {
    std::istringstream in(text);
    return parse_log(in);
}

std::string replay_error(const std::string& text) {
    try {
        parse(text);
    } catch (const ReplayError& e) {
        return e.what();
    }
    return {};
}

template <class T>
std::size_t first_index(const std::vector<Event>& log) {
    for (std::size_t k = 0; k < log.size(); ++k)
        if (std::holds_alternative<T>(log[k])) return k;
    return log.size();
}

}  // namespace

TEST(EventJson, EveryEventRoundTrips) {
    const auto log = trial_log(2, 1);
    std::set<std::size_t> kinds;
    for (const Event& e : log) {
        kinds.insert(e.index());
        const json j = event_to_json(e);
        EXPECT_EQ(event_to_json(event_from_json(json::parse(j.dump()))), j);
    }
    // Created, Enrolled, outcomes, decisions, admissible set, updates, finish.
    EXPECT_GE(kinds.size(), 8u);
}

TEST(EventJson, CombinationsAreOneBased) {
    const json j = event_to_json(Enrolled{1, 0.0, Combo{0, 0}, 1, -1});
    EXPECT_EQ(j["combo"], json::array({1, 1}));
    EXPECT_EQ(j["type"], "enroll");
}

TEST(EventJson, RejectsMalformedEvents) {
    EXPECT_THROW(event_from_json(json::array()), ReplayError);
    EXPECT_THROW(event_from_json(json{{"type", "nonsense"}}), ReplayError);
    EXPECT_THROW(event_from_json(json{{"type", "enrolled"}}), ReplayError);
}

TEST(Replay, FoldMatchesEngineState) {
    for (int sc : {1, 2, 5}) {
        std::vector<Event> log;
        run_trial(reference_scenario(sc).scenario, quick_config(), 7, &log);
        const ParsedLog parsed = parse(join(to_lines(log)));
        EXPECT_EQ(state_to_json(parsed.state), state_to_json(fold(log)));
        EXPECT_EQ(parsed.events.size(), log.size());
        EXPECT_EQ(parsed.state.phase, Phase::Finished);
    }
}

TEST(Replay, RestoredEngineMatchesFold) {
    const auto log = trial_log(3, 2);
    const TrialEngine e = TrialEngine::restore(log);
    EXPECT_EQ(state_to_json(e.state()), state_to_json(fold(log)));
}

TEST(Replay, MissingTrailingNewlineIsFine) {
    std::string text = join(to_lines(trial_log(1, 3)));
    text.pop_back();
    EXPECT_NO_THROW(parse(text));
}

TEST(Replay, TruncatedLogGivesConsistentPartialState) {
    const auto log = trial_log(2, 4);
    const auto lines = to_lines(log);
    // Outcomes of patients already treated may follow an early finish.
    const std::size_t finish = first_index<Finished>(log);
    for (std::size_t keep : {std::size_t{2}, lines.size() / 3, lines.size() / 2, lines.size() - 1}) {
        const std::vector<std::string> prefix(lines.begin(), lines.begin() + static_cast<std::ptrdiff_t>(keep));
        const ParsedLog p = parse(join(prefix));
        EXPECT_EQ(p.state.events, keep - 1);
        EXPECT_EQ(p.state.phase == Phase::Finished, keep - 1 > finish);
        EXPECT_EQ(state_to_json(p.state),
                  state_to_json(fold(std::vector<Event>(log.begin(), log.begin() + static_cast<std::ptrdiff_t>(keep - 1)))));
    }
}

TEST(Replay, ResumeRecreatesTheDroppedDecision) {
    // A crash between an outcome and the decision it triggers.
    const auto log = trial_log(1, 5);
    const std::size_t k = first_index<DoseDecision>(log);
    ASSERT_LT(k, log.size());
    TrialEngine e = TrialEngine::restore(std::vector<Event>(log.begin(), log.begin() + static_cast<std::ptrdiff_t>(k)));
    e.resume();
    ASSERT_GT(e.log().size(), k);
    EXPECT_EQ(event_to_json(e.log()[k]), event_to_json(log[k]));
}

TEST(Tamper, EnrollmentAtWrongCombination) {
    auto lines = to_lines(trial_log(1, 6));
    const auto log = trial_log(1, 6);
    const std::size_t k = first_index<Enrolled>(log) + 1;
    json j = json::parse(lines[k]);
    j["combo"] = json::array({3, 2});
    lines[k] = j.dump();
    const std::string err = replay_error(join(lines));
    EXPECT_NE(err.find("line " + std::to_string(k + 1)), std::string::npos) << err;
    EXPECT_NE(err.find("current combination"), std::string::npos) << err;
}

TEST(Tamper, DuplicatedOutcome) {
    auto lines = to_lines(trial_log(1, 7));
    const std::size_t k = first_index<ToxicityObserved>(trial_log(1, 7)) + 1;
    lines.insert(lines.begin() + static_cast<std::ptrdiff_t>(k) + 1, lines[k]);
    EXPECT_NE(replay_error(join(lines)).find("recorded twice"), std::string::npos);
}

TEST(Tamper, FlippedDltBreaksDecisionCount) {
    const auto log = trial_log(1, 8);
    auto lines = to_lines(log);
    const std::size_t k = first_index<ToxicityObserved>(log) + 1;
    json j = json::parse(lines[k]);
    j["dlt"] = !j["dlt"].get<bool>();
    lines[k] = j.dump();
    EXPECT_NE(replay_error(join(lines)).find("DLT count"), std::string::npos);
}

TEST(Tamper, DroppedEnrollmentBreaksIds) {
    const auto log = trial_log(1, 9);
    auto lines = to_lines(log);
    lines.erase(lines.begin() + static_cast<std::ptrdiff_t>(first_index<Enrolled>(log)) + 1);
    EXPECT_FALSE(replay_error(join(lines)).empty());
}

TEST(Tamper, ProbabilitiesMustSumToOne) {
    const auto log = trial_log(2, 10);
    auto lines = to_lines(log);
    const std::size_t k = first_index<ProbabilitiesUpdated>(log) + 1;
    ASSERT_LT(k, lines.size());
    json j = json::parse(lines[k]);
    j["probs"][0] = j["probs"][0].get<double>() + 0.1;
    lines[k] = j.dump();
    EXPECT_NE(replay_error(join(lines)).find("sum to one"), std::string::npos);
}

TEST(Tamper, BadHeaderAndGarbage) {
    auto lines = to_lines(trial_log(1, 11));
    auto bad_header = lines;
    bad_header[0] = R"({"schema":"other","version":1})";
    EXPECT_NE(replay_error(join(bad_header)).find("line 1"), std::string::npos);
    auto garbage = lines;
    garbage[3] = "{not json";
    EXPECT_NE(replay_error(join(garbage)).find("line 4"), std::string::npos);
    EXPECT_NE(replay_error("").find("empty"), std::string::npos);
}

TEST(State, JsonSnapshotHasTheEssentials) {
    const json s = state_to_json(fold(trial_log(2, 12)));
    for (const char* key : {"phase", "enrolled", "arms"}) EXPECT_TRUE(s.contains(key)) << key;
}
