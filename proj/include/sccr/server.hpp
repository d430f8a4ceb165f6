#pragma once

// Local HTTP JSON API under /api/v1. Reads run concurrently; cycles, SLA
// updates and elicitation-session writes hold the exclusive lock.

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "sccr/elicitation_workflow.hpp"
#include "sccr/engine.hpp"
#include "sccr/report.hpp"

namespace sccr::server {

using json = nlohmann::json;

class Api {
public:
    explicit Api(engine::Runner& runner, std::optional<elicitation::Questionnaire> questionnaire = std::nullopt)
        : runner_(runner), questionnaire_(std::move(questionnaire)) {}

    void mount(httplib::Server& srv) {
        srv.Get("/api/v1/status", [this](const auto& req, auto& res) { guard(res, [&] { status(req, res); }); });
        srv.Get("/api/v1/report/latest", [this](const auto& req, auto& res) { guard(res, [&] { latest(req, res); }); });
        srv.Get("/api/v1/report/history",
                [this](const auto& req, auto& res) { guard(res, [&] { history(req, res); }); });
        srv.Get("/api/v1/forecast", [this](const auto& req, auto& res) { guard(res, [&] { forecast(req, res); }); });
        srv.Get("/api/v1/suppliers/ranking",
                [this](const auto& req, auto& res) { guard(res, [&] { ranking(req, res); }); });
        srv.Post("/api/v1/scan", [this](const auto& req, auto& res) { guard(res, [&] { scan(req, res); }); });
        srv.Post("/api/v1/whatif", [this](const auto& req, auto& res) { guard(res, [&] { whatif(req, res); }); });
        srv.Post("/api/v1/elicitation/session",
                 [this](const auto& req, auto& res) { guard(res, [&] { open_session(req, res); }); });
        srv.Post("/api/v1/elicitation/answer",
                 [this](const auto& req, auto& res) { guard(res, [&] { answer(req, res); }); });
        srv.Post("/api/v1/sla/config", [this](const auto& req, auto& res) { guard(res, [&] { sla(req, res); }); });
    }

private:
    template <typename F>
    static void guard(httplib::Response& res, F&& f) {
        try {
            f();
        } catch (const ValidationError& e) {
            send(res, 400, json{{"error", e.what()}});
        } catch (const DomainError& e) {
            send(res, 400, json{{"error", e.what()}});
        } catch (const json::exception& e) {
            send(res, 400, json{{"error", std::string("malformed JSON: ") + e.what()}});
        } catch (const std::invalid_argument&) {
            send(res, 400, json{{"error", "bad query parameter"}});
        } catch (const std::out_of_range&) {
            send(res, 400, json{{"error", "query parameter out of range"}});
        } catch (const std::exception& e) {
            send(res, 500, json{{"error", e.what()}});
        }
    }

    static void send(httplib::Response& res, int code, const json& body) {
        res.status = code;
        res.set_content(body.dump(), "application/json");
    }

    static json body_of(const httplib::Request& req) {
        if (req.body.empty()) return json::object();
        return json::parse(req.body);
    }

    std::vector<pipeline::ScanSnapshot> snapshots_from(const json& body, std::optional<std::int64_t> t) const {
        const json* list = &body;
        if (body.is_object() && body.contains("snapshots")) list = &body.at("snapshots");
        std::vector<json> items;
        if (list->is_array()) {
            for (const auto& s : *list) items.push_back(s);
        } else {
            items.push_back(*list);
        }
        std::vector<pipeline::ScanSnapshot> out;
        for (std::size_t i = 0; i < items.size(); ++i) {
            auto j = items[i];
            if (t && j.is_object() && !j.contains("t")) j["t"] = *t;
            out.push_back(pipeline::scan_from_json(j, runner_.engine().schema(), i + 1));
        }
        return out;
    }

    void status(const httplib::Request&, httplib::Response& res) {
        std::shared_lock lock(mutex_);
        const auto& e = runner_.engine();
        json attacks = json::array();
        for (const auto& a : e.model().attacks) attacks.push_back({{"id", a.attack_id}, {"levels", a.levels()}});
        send(res, 200,
             json{{"t", runner_.state().t},
                  {"next_t", runner_.state().t + 1},
                  {"config_hash", e.config_hash()},
                  {"company", e.config().company},
                  {"suppliers", e.config().suppliers},
                  {"indicators", e.config().monitored()},
                  {"attack_types", attacks},
                  {"env_size", e.schema().env_size},
                  {"posture_size", e.schema().posture_size},
                  {"history_records", runner_.state().history_records},
                  {"sessions", sessions_.size()}});
    }

    void latest(const httplib::Request&, httplib::Response& res) {
        std::shared_lock lock(mutex_);
        const auto h = runner_.store().history();
        if (h.empty()) {
            send(res, 404, json{{"error", "no report yet"}});
            return;
        }
        send(res, 200, h.back());
    }

    void history(const httplib::Request& req, httplib::Response& res) {
        std::shared_lock lock(mutex_);
        std::optional<std::int64_t> from;
        std::optional<std::int64_t> to;
        if (req.has_param("from")) from = std::stoll(req.get_param_value("from"));
        if (req.has_param("to")) to = std::stoll(req.get_param_value("to"));
        json out = json::array();
        for (const auto& r : runner_.store().history()) {
            const auto t = r.at("t").get<std::int64_t>();
            if ((from && t < *from) || (to && t > *to)) continue;
            out.push_back(r);
        }
        send(res, 200, out);
    }

    void forecast(const httplib::Request& req, httplib::Response& res) {
        std::shared_lock lock(mutex_);
        if (!req.has_param("indicator")) throw ValidationError("query parameter 'indicator' is required");
        const auto indicator = req.get_param_value("indicator");
        int steps = 20;
        if (req.has_param("steps")) steps = std::stoi(req.get_param_value("steps"));
        if (steps < 1 || steps > 1000) throw ValidationError("steps must lie in 1..1000");
        const auto& dlms = runner_.state().dlm;
        auto it = dlms.find(indicator);
        if (it == dlms.end()) {
            send(res, 404, json{{"error", "no forecasting model for indicator " + indicator}});
            return;
        }
        json fc = json::array();
        for (const auto& f : dlm::forecast(it->second, steps, runner_.engine().config().alpha)) {
            fc.push_back(io::forecast_to_json(f));
        }
        send(res, 200, json{{"indicator", indicator}, {"origin", it->second.t}, {"forecasts", fc}});
    }

    void ranking(const httplib::Request& req, httplib::Response& res) {
        std::shared_lock lock(mutex_);
        const auto key = rank_key_from_string(req.has_param("key") ? req.get_param_value("key") : "IR");
        std::size_t window = 1;
        if (req.has_param("window")) window = static_cast<std::size_t>(std::stoul(req.get_param_value("window")));
        const auto reports = runner_.store().reports();
        if (reports.empty()) {
            send(res, 404, json{{"error", "no report yet"}});
            return;
        }
        send(res, 200, io::ranking_to_json(rank_suppliers(reports, key, window), key));
    }

    void scan(const httplib::Request& req, httplib::Response& res) {
        std::unique_lock lock(mutex_);
        const auto snaps = snapshots_from(body_of(req), runner_.state().t + 1);
        send(res, 200, io::report_to_json(runner_.step(snaps)));
    }

    void whatif(const httplib::Request& req, httplib::Response& res) {
        std::shared_lock lock(mutex_);
        const auto body = body_of(req);
        const auto snaps = snapshots_from(body, runner_.state().t + 1);
        engine::Engine e = runner_.engine();
        if (body.is_object() && body.contains("sla")) {
            std::vector<engine::SlaLevel> levels;
            for (const auto& s : body.at("sla")) levels.push_back(engine::sla_level_from_json(s));
            e.set_sla(std::move(levels));
        }
        const auto report = e.what_if(runner_.state(), snaps);
        const std::vector<RiskReport> one{report};
        send(res, 200,
             json{{"ephemeral", true},
                  {"report", io::report_to_json(report)},
                  {"ranking", io::ranking_to_json(rank_suppliers(one, RankKey::ir), RankKey::ir)},
                  {"ranking_iap", io::ranking_to_json(rank_suppliers(one, RankKey::iap), RankKey::iap)}});
    }

    void sla(const httplib::Request& req, httplib::Response& res) {
        std::unique_lock lock(mutex_);
        const auto body = body_of(req);
        io::check_keys(body, {"sla"}, {}, "sla config");
        std::vector<engine::SlaLevel> levels;
        for (const auto& s : body.at("sla")) levels.push_back(engine::sla_level_from_json(s));
        runner_.engine().set_sla(std::move(levels));
        send(res, 200, json{{"sla", engine::config_to_json(runner_.engine().config()).at("sla")},
                            {"config_hash", runner_.engine().config_hash()}});
    }

    static json feedback_json(const std::vector<elicitation::ConsistencyReport>& v) {
        json out = json::array();
        for (const auto& r : v) out.push_back(io::consistency_to_json(r));
        return out;
    }

    json session_view(const std::string& id, const elicitation::Session& s) const {
        auto next = s.next_question();
        return json{{"session", id},
                    {"next", next ? elicitation::question_to_json(*next) : json(nullptr)},
                    {"answered", s.answers()},
                    {"complete", s.complete()}};
    }

    void open_session(const httplib::Request& req, httplib::Response& res) {
        std::unique_lock lock(mutex_);
        const auto body = body_of(req);
        io::check_keys(body, {}, {"questionnaire", "tradeoffs"}, "session request");
        elicitation::Questionnaire q;
        if (body.contains("questionnaire")) {
            q = elicitation::questionnaire_from_json(body.at("questionnaire"));
        } else if (questionnaire_) {
            q = *questionnaire_;
        } else {
            throw ValidationError("no questionnaire configured; pass one in the request");
        }
        std::vector<elicitation::TradeoffJudgment> env;
        std::vector<elicitation::TradeoffJudgment> posture;
        if (body.contains("tradeoffs")) {
            const auto& t = body.at("tradeoffs");
            io::check_keys(t, {}, {"environment", "posture"}, "tradeoffs");
            if (t.contains("environment")) env = io::tradeoffs_from_json(t.at("environment"));
            if (t.contains("posture")) posture = io::tradeoffs_from_json(t.at("posture"));
        }
        const std::string id = "s" + std::to_string(++session_counter_);
        auto [it, _] = sessions_.emplace(id, elicitation::Session(std::move(q), std::move(env), std::move(posture)));
        json questions = json::array();
        for (const auto& qq : it->second.questions()) questions.push_back(elicitation::question_to_json(qq));
        auto view = session_view(id, it->second);
        view["questions"] = questions;
        send(res, 201, view);
    }

    // {session, question, probability} records an answer; {session, finalize: true[, force]}
    // builds the model, refused while a consistency check fails unless forced.
    void answer(const httplib::Request& req, httplib::Response& res) {
        std::unique_lock lock(mutex_);
        const auto body = body_of(req);
        io::check_keys(body, {"session"}, {"question", "probability", "finalize", "force"}, "answer request");
        const auto id = io::get<std::string>(body, "session", "answer request");
        auto it = sessions_.find(id);
        if (it == sessions_.end()) {
            send(res, 404, json{{"error", "unknown session " + id}});
            return;
        }
        auto& s = it->second;
        if (body.value("finalize", false)) {
            auto result = s.finalize();
            bool ok = true;
            for (const auto& c : result.checks) ok = ok && c.pass;
            if (!ok && !body.value("force", false)) {
                json out{{"error", "consistency checks fail; revise answers or finalize with force"},
                         {"feedback", feedback_json(result.checks)}};
                send(res, 409, out);
                return;
            }
            send(res, 200, json{{"session", id},
                                {"model", io::model_set_to_json(result.model)},
                                {"consistency", feedback_json(result.checks)}});
            return;
        }
        const auto qid = io::get<std::string>(body, "question", "answer request");
        const auto p = io::get<double>(body, "probability", "answer request");
        const auto fb = s.answer(qid, p);
        auto view = session_view(id, s);
        view["feedback"] = feedback_json(fb);
        send(res, 200, view);
    }

    engine::Runner& runner_;
    std::optional<elicitation::Questionnaire> questionnaire_;
    std::map<std::string, elicitation::Session> sessions_;
    std::uint64_t session_counter_ = 0;
    mutable std::shared_mutex mutex_;
};

}  // namespace sccr::server
