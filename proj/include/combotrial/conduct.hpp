#pragma once

// Live-trial conduct service. Each trial is an append-only event log
// <data_dir>/<id>.jsonl; the in-memory engine is always the fold of that log.
// ConductService holds the request logic and is HTTP-agnostic;
// register_routes binds it to a cpp-httplib server.

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <regex>
#include <sstream>
#include <string>

#include "combotrial/events.hpp"
#include "combotrial/json_io.hpp"
#include "combotrial/trial_engine.hpp"

// After Eigen: <resolv.h>, pulled in by httplib, defines a `_res` macro that
// collides with Eigen parameter names.
#include "httplib.h"

namespace combotrial {

struct ConductResponse {
    int status = 200;
    json body;
};

inline constexpr std::uint64_t kReadStream = 0x5245414453554D4DULL;

namespace detail {

inline ConductResponse error_response(int status, const std::string& code, const std::string& message) {
    return {status, {{"error", code}, {"message", message}}};
}

inline bool valid_trial_id(const std::string& id) {
    static const std::regex re("[A-Za-z0-9_-]{1,64}");
    return std::regex_match(id, re);
}

/// Reads a log written by this service. A final line without its newline is
/// an interrupted append; it is dropped and the file truncated to the last
/// complete line.
inline std::vector<Event> load_log(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ReplayError("cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();
    const auto last_nl = text.find_last_of('\n');
    const std::size_t keep = last_nl == std::string::npos ? 0 : last_nl + 1;
    if (keep != text.size()) {
        text.resize(keep);
        in.close();
        std::filesystem::resize_file(path, keep);
    }
    std::istringstream lines(text);
    return parse_log(lines).events;
}

}  // namespace detail

class ConductService {
   public:
    explicit ConductService(std::filesystem::path data_dir) : dir_(std::move(data_dir)) {
        std::filesystem::create_directories(dir_);
    }

    const std::filesystem::path& data_dir() const { return dir_; }

    /// Body: {"config": {...}?, "seed": n?, "id": "name"?}.
    ConductResponse create(const json& body) {
        if (!body.is_object()) return detail::error_response(422, "invalid_request", "body must be a JSON object");
        DesignConfig config;
        std::uint64_t seed = 1;
        std::string id;
        try {
            io::expect_object(body, "", {"config", "seed", "id"});
            if (body.contains("config")) config = design_config_from_json(body["config"], "config");
            if (body.contains("seed")) {
                const json& sj = body["seed"];
                if (!sj.is_number_integer() || (!sj.is_number_unsigned() && sj.get<std::int64_t>() < 0))
                    throw ConfigError("seed", "must be a non-negative integer");
                seed = body["seed"].get<std::uint64_t>();
            }
            if (body.contains("id")) id = io::string(body["id"], "id");
        } catch (const ConfigError& e) {
            return detail::error_response(422, "invalid_config", e.what());
        }
        std::lock_guard<std::mutex> lock(registry_mutex_);
        if (id.empty()) {
            for (int n = static_cast<int>(trials_.size()) + 1;; ++n) {
                id = "trial-" + std::to_string(n);
                if (!trials_.count(id) && !std::filesystem::exists(log_path(id))) break;
            }
        }
        if (!detail::valid_trial_id(id))
            return detail::error_response(422, "invalid_id", "trial id must match [A-Za-z0-9_-]{1,64}");
        if (trials_.count(id) || std::filesystem::exists(log_path(id)))
            return detail::error_response(409, "duplicate_trial", "trial '" + id + "' already exists");

        auto trial = std::make_shared<Trial>();
        trial->path = log_path(id);
        {
            std::ofstream out(trial->path, std::ios::binary);
            out << log_header().dump() << "\n";
        }
        trial->engine = TrialEngine::create(config, seed, id, appender(trial->path));
        trials_[id] = trial;
        return {201, snapshot(*trial)};
    }

    ConductResponse status(const std::string& id) {
        return with_trial(id, [&](Trial& t) { return ConductResponse{200, snapshot(t)}; });
    }

    /// Body: {"time": months?}. Without a time the patient enrolls at the
    /// current trial clock.
    ConductResponse enroll(const std::string& id, const json& body) {
        return with_trial(id, [&](Trial& t) {
            double time = t.engine.state().clock;
            if (auto err = read_time(body, time)) return *err;
            const PatientRecord& p = t.engine.enroll(time);
            json j = snapshot(t);
            j["patient"] = patient_json(p);
            return ConductResponse{201, j};
        });
    }

    /// Body: {"patient": id, "toxicity": bool?, "efficacy": bool?, "time": months?}.
    ConductResponse outcomes(const std::string& id, const json& body) {
        return with_trial(id, [&](Trial& t) {
            if (!body.is_object() || !body.contains("patient") || !body["patient"].is_number_integer())
                return detail::error_response(422, "invalid_request", "'patient' (integer) is required");
            const bool has_tox = body.contains("toxicity"), has_eff = body.contains("efficacy");
            if (!has_tox && !has_eff)
                return detail::error_response(422, "invalid_request", "give 'toxicity' and/or 'efficacy'");
            if ((has_tox && !body["toxicity"].is_boolean()) || (has_eff && !body["efficacy"].is_boolean()))
                return detail::error_response(422, "invalid_request", "outcomes must be booleans");
            double time = t.engine.state().clock;
            if (auto err = read_time(body, time)) return *err;
            const int pid = body["patient"].get<int>();
            const TrialState& s = t.engine.state();
            if (pid < 1 || pid > s.enrolled())
                return detail::error_response(404, "unknown_patient", "patient " + std::to_string(pid) + " is not enrolled");
            const PatientRecord& p = s.patient(pid);
            // Check both before applying either so a conflict changes nothing.
            if ((has_tox && p.dlt) || (has_eff && p.response))
                return detail::error_response(409, "duplicate_outcome", "outcome already recorded for patient " + std::to_string(pid));
            if (has_tox) t.engine.record_toxicity(pid, body["toxicity"].get<bool>(), time);
            if (has_eff) t.engine.record_efficacy(pid, body["efficacy"].get<bool>(), time);
            return ConductResponse{200, snapshot(t)};
        });
    }

    /// Posterior summaries on the data recorded so far. Never appends events;
    /// chains are seeded from the event count so repeated reads agree.
    ConductResponse recommendation(const std::string& id) {
        return with_trial(id, [&](Trial& t) {
            const TrialState& s = t.engine.state();
            const DesignConfig& c = s.config;
            const std::uint64_t seed = derive_seed(s.seed ^ kReadStream, s.events);
            const ToxPosteriorChain tox = sample_toxicity_posterior(s.tox, c.grid, c.tox_priors, c.mcmc, seed);
            json j{{"trial", s.trial_id}, {"phase", to_string(s.phase)}, {"gate", to_string(t.engine.gate())}};
            j["toxicity"] = {{"prob_below", io::matrix_json(prob_below_surface(tox, c.phi_t))},
                             {"posterior_mean", io::matrix_json(posterior_mean_surface(tox))},
                             {"phi_t", c.phi_t}};
            if (s.phase == Phase::PhaseOne) {
                j["next_combo"] = io::combo_json(s.current);
            } else if (!s.arms.empty()) {
                const EffPosteriorChain eff =
                    sample_efficacy_posterior(s.arm_data(), c.mcmc, derive_seed(seed, 1), c.eff_model);
                json arms = json::array();
                for (std::size_t k = 0; k < s.arms.size(); ++k)
                    arms.push_back({{"arm", k + 1},
                                    {"combo", io::combo_json(s.arms[k])},
                                    {"open", !s.closures[k]},
                                    {"randomization_prob", s.probs.probs[k]},
                                    {"eff_prob_exceeds", prob_exceeds(eff, k, c.phi_e)},
                                    {"eff_posterior_mean", posterior_mean(eff, k)}});
                j["arms"] = arms;
                j["phi_e"] = c.phi_e;
            }
            j["selected"] = s.selected ? io::combo_json(*s.selected) : json(nullptr);
            if (s.phase == Phase::Finished) j["finish_reason"] = s.finish_reason;
            return ConductResponse{200, j};
        });
    }

    /// Body: {"time": months?}.
    ConductResponse finalize(const std::string& id, const json& body) {
        return with_trial(id, [&](Trial& t) {
            double time = t.engine.state().clock;
            if (auto err = read_time(body, time)) return *err;
            t.engine.finalize(time);
            return ConductResponse{200, snapshot(t)};
        });
    }

    /// Number of events in a trial's log (0 for an unknown trial).
    std::size_t log_length(const std::string& id) {
        auto t = find(id);
        if (!t) return 0;
        std::lock_guard<std::mutex> lock(t->mutex);
        return t->engine.log().size();
    }

   private:
    struct Trial {
        std::mutex mutex;
        std::filesystem::path path;
        TrialEngine engine;
    };

    std::filesystem::path dir_;
    std::mutex registry_mutex_;
    std::map<std::string, std::shared_ptr<Trial>> trials_;

    std::filesystem::path log_path(const std::string& id) const { return dir_ / (id + ".jsonl"); }

    static TrialEngine::Sink appender(const std::filesystem::path& path) {
        return [path](const Event& ev) {
            std::ofstream out(path, std::ios::binary | std::ios::app);
            out << event_to_json(ev).dump() << "\n";
            out.flush();
            if (!out) throw std::runtime_error("failed to append to " + path.string());
        };
    }

    std::shared_ptr<Trial> find(const std::string& id) {
        std::lock_guard<std::mutex> lock(registry_mutex_);
        if (auto it = trials_.find(id); it != trials_.end()) return it->second;
        if (!detail::valid_trial_id(id)) return nullptr;
        const auto path = log_path(id);
        if (!std::filesystem::exists(path)) return nullptr;
        auto trial = std::make_shared<Trial>();
        trial->path = path;
        trial->engine = TrialEngine::restore(detail::load_log(path), appender(path));
        trial->engine.resume();
        trials_[id] = trial;
        return trial;
    }

    template <class F>
    ConductResponse with_trial(const std::string& id, F&& f) {
        std::shared_ptr<Trial> t;
        try {
            t = find(id);
        } catch (const ReplayError& e) {
            return detail::error_response(500, "corrupt_log", e.what());
        }
        if (!t) return detail::error_response(404, "unknown_trial", "no trial '" + id + "'");
        std::lock_guard<std::mutex> lock(t->mutex);
        try {
            return f(*t);
        } catch (const EngineError& e) {
            switch (e.code()) {
                case EngineErrc::UnknownPatient: return detail::error_response(404, "unknown_patient", e.what());
                case EngineErrc::Duplicate: return detail::error_response(409, "duplicate_outcome", e.what());
                case EngineErrc::Suspended: return detail::error_response(409, "accrual_suspended", e.what());
                case EngineErrc::Full: return detail::error_response(409, "capacity_reached", e.what());
                case EngineErrc::Finished: return detail::error_response(409, "trial_finished", e.what());
                case EngineErrc::BadTime: return detail::error_response(422, "invalid_time", e.what());
            }
            return detail::error_response(500, "internal", e.what());
        }
    }

    static std::optional<ConductResponse> read_time(const json& body, double& time) {
        if (body.is_object() && body.contains("time")) {
            if (!body["time"].is_number()) return detail::error_response(422, "invalid_time", "'time' must be a number");
            time = body["time"].get<double>();
        }
        return std::nullopt;
    }

    static json patient_json(const PatientRecord& p) {
        json j{{"id", p.id}, {"entry", p.entry}, {"combo", io::combo_json(p.combo)}, {"phase", p.phase}};
        if (p.arm >= 0) j["arm"] = p.arm + 1;
        return j;
    }

    static json snapshot(Trial& t) {
        json j = state_to_json(t.engine.state());
        j["gate"] = to_string(t.engine.gate());
        return j;
    }
};

/// Routes:
///   POST /trials                       create
///   GET  /trials/{id}                  status
///   POST /trials/{id}/enroll           enroll the next patient
///   POST /trials/{id}/outcomes         record toxicity and/or efficacy
///   GET  /trials/{id}/recommendation   posterior summaries
///   POST /trials/{id}/finalize         stop and select
inline void register_routes(httplib::Server& server, ConductService& service) {
    const auto reply = [](httplib::Response& res, const ConductResponse& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    const auto parse = [](const httplib::Request& req) -> std::optional<json> {
        if (req.body.empty()) return json::object();
        try {
            return json::parse(req.body);
        } catch (const json::exception&) {
            return std::nullopt;
        }
    };
    const auto bad_json = detail::error_response(400, "invalid_json", "request body is not valid JSON");

    server.Post("/trials", [=, &service](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse(req);
        reply(res, body ? service.create(*body) : bad_json);
    });
    server.Get(R"(/trials/([A-Za-z0-9_-]+))", [=, &service](const httplib::Request& req, httplib::Response& res) {
        reply(res, service.status(req.matches[1]));
    });
    server.Post(R"(/trials/([A-Za-z0-9_-]+)/enroll)",
                [=, &service](const httplib::Request& req, httplib::Response& res) {
                    const auto body = parse(req);
                    reply(res, body ? service.enroll(req.matches[1], *body) : bad_json);
                });
    server.Post(R"(/trials/([A-Za-z0-9_-]+)/outcomes)",
                [=, &service](const httplib::Request& req, httplib::Response& res) {
                    const auto body = parse(req);
                    reply(res, body ? service.outcomes(req.matches[1], *body) : bad_json);
                });
    server.Get(R"(/trials/([A-Za-z0-9_-]+)/recommendation)",
               [=, &service](const httplib::Request& req, httplib::Response& res) {
                   reply(res, service.recommendation(req.matches[1]));
               });
    server.Post(R"(/trials/([A-Za-z0-9_-]+)/finalize)",
                [=, &service](const httplib::Request& req, httplib::Response& res) {
                    const auto body = parse(req);
                    reply(res, body ? service.finalize(req.matches[1], *body) : bad_json);
                });
    server.set_exception_handler([=](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        reply(res, detail::error_response(500, "internal", what));
    });
}

}  // namespace combotrial
