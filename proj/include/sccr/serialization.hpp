#pragma once

// JSON file formats: seed questions, expert answers, weights, consistency
// reports, attack model files, impact configs/fits, DLM checkpoints, forecasts,
// alarms and scan scenarios. Readers are strict: unknown keys are rejected.

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sccr/attack_model.hpp"
#include "sccr/elicitation.hpp"
#include "sccr/errors.hpp"
#include "sccr/forecasting.hpp"
#include "sccr/impact_model.hpp"
#include "sccr/pipeline.hpp"

namespace sccr::io {

using json = nlohmann::json;

inline void check_keys(const json& j, std::initializer_list<const char*> required,
                       std::initializer_list<const char*> optional, const std::string& context) {
    if (!j.is_object()) throw ValidationError(context + ": expected a JSON object");
    std::set<std::string> allowed;
    for (const char* k : required) {
        allowed.insert(k);
        if (!j.contains(k)) throw ValidationError(context + ": missing field '" + k + "'");
    }
    for (const char* k : optional) allowed.insert(k);
    for (const auto& [key, _] : j.items()) {
        if (!allowed.contains(key)) throw ValidationError(context + ": unknown field '" + key + "'");
    }
}

template <typename T>
T get(const json& j, const char* key, const std::string& context) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ValidationError(context + ": field '" + key + "' has the wrong type (" + e.what() + ")");
    }
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError(path + ": malformed JSON at byte " + std::to_string(e.byte));
    }
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!out) throw IoError("failed writing " + path);
}

inline void write_json_file(const std::string& path, const json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Elicitation

inline std::vector<elicitation::SeedQuestion> seeds_from_json(const json& j) {
    check_keys(j, {"questions"}, {"quantile_probs"}, "seed file");
    std::vector<double> probs{0.05, 0.50, 0.95};
    if (j.contains("quantile_probs")) probs = get<std::vector<double>>(j, "quantile_probs", "seed file");
    std::vector<elicitation::SeedQuestion> out;
    for (const auto& q : j.at("questions")) {
        check_keys(q, {"id", "realization", "background_range"}, {"quantile_probs", "text"},
                   "seed question");
        elicitation::SeedQuestion s;
        s.id = get<std::string>(q, "id", "seed question");
        const std::string ctx = "seed question " + s.id;
        s.realization = get<double>(q, "realization", ctx);
        const auto range = get<std::vector<double>>(q, "background_range", ctx);
        if (range.size() != 2) throw ValidationError(ctx + ": background_range needs [low, high]");
        s.background_low = range[0];
        s.background_high = range[1];
        s.quantile_probs = q.contains("quantile_probs") ? get<std::vector<double>>(q, "quantile_probs", ctx)
                                                        : probs;
        out.push_back(std::move(s));
    }
    return out;
}

// Accepts either {"id": value, ...} or [{"id": ..., <value_key>: value}, ...].
template <typename T>
std::map<std::string, T> keyed_values(const json& j, const char* value_key, const std::string& ctx) {
    std::map<std::string, T> out;
    if (j.is_object()) {
        for (const auto& [id, v] : j.items()) {
            try {
                out[id] = v.template get<T>();
            } catch (const json::exception&) {
                throw ValidationError(ctx + ": bad value for '" + id + "'");
            }
        }
    } else if (j.is_array()) {
        for (const auto& item : j) {
            check_keys(item, {"id", value_key}, {}, ctx);
            out[get<std::string>(item, "id", ctx)] = get<T>(item, value_key, ctx);
        }
    } else {
        throw ValidationError(ctx + ": expected an object or an array");
    }
    return out;
}

struct AnswersFile {
    std::vector<elicitation::ExpertAnswerSet> experts;
    std::vector<elicitation::TradeoffJudgment> environment_tradeoffs;
    std::vector<elicitation::TradeoffJudgment> posture_tradeoffs;
};

inline std::vector<elicitation::TradeoffJudgment> tradeoffs_from_json(const json& j) {
    std::vector<elicitation::TradeoffJudgment> out;
    for (const auto& t : j) {
        check_keys(t, {"index", "delta1", "delta2"}, {}, "tradeoff judgment");
        out.push_back({get<int>(t, "index", "tradeoff judgment"), get<double>(t, "delta1", "tradeoff judgment"),
                       get<double>(t, "delta2", "tradeoff judgment")});
    }
    return out;
}

inline json tradeoffs_to_json(const std::vector<elicitation::TradeoffJudgment>& v) {
    json out = json::array();
    for (const auto& t : v) out.push_back({{"index", t.variable_index}, {"delta1", t.delta1}, {"delta2", t.delta2}});
    return out;
}

inline AnswersFile answers_from_json(const json& j) {
    check_keys(j, {"experts"}, {"tradeoffs"}, "answers file");
    AnswersFile out;
    for (const auto& e : j.at("experts")) {
        check_keys(e, {"id"}, {"seed_answers", "model_answers"}, "expert");
        elicitation::ExpertAnswerSet a;
        a.expert_id = get<std::string>(e, "id", "expert");
        const std::string ctx = "expert " + a.expert_id;
        if (e.contains("seed_answers")) {
            a.seed_quantiles = keyed_values<std::vector<double>>(e.at("seed_answers"), "quantiles", ctx);
        }
        if (e.contains("model_answers")) {
            a.model_answers = keyed_values<double>(e.at("model_answers"), "probability", ctx);
        }
        out.experts.push_back(std::move(a));
    }
    if (j.contains("tradeoffs")) {
        const auto& t = j.at("tradeoffs");
        check_keys(t, {}, {"environment", "posture"}, "tradeoffs");
        if (t.contains("environment")) out.environment_tradeoffs = tradeoffs_from_json(t.at("environment"));
        if (t.contains("posture")) out.posture_tradeoffs = tradeoffs_from_json(t.at("posture"));
    }
    return out;
}

inline json weights_to_json(const elicitation::ExpertWeights& w) {
    return json{{"weights", w.weights}, {"calibration", w.calibration}, {"information", w.information}};
}

inline elicitation::ExpertWeights weights_from_json(const json& j) {
    check_keys(j, {"weights"}, {"calibration", "information"}, "weights file");
    elicitation::ExpertWeights w;
    w.weights = get<std::map<std::string, double>>(j, "weights", "weights file");
    if (j.contains("calibration")) w.calibration = get<std::map<std::string, double>>(j, "calibration", "weights file");
    if (j.contains("information")) w.information = get<std::map<std::string, double>>(j, "information", "weights file");
    double total = 0.0;
    for (const auto& [id, v] : w.weights) {
        if (!(v >= 0.0)) throw ValidationError("weights file: negative weight for " + id);
        total += v;
    }
    if (std::fabs(total - 1.0) > 1e-9) throw ValidationError("weights file: weights must sum to 1");
    return w;
}

inline json consistency_to_json(const elicitation::ConsistencyReport& r) {
    return json{{"check_id", r.check_id},
                {"implied_value", r.implied_value},
                {"elicited_value", r.elicited_value},
                {"implied_probability", r.implied_probability},
                {"elicited_probability", r.elicited_probability},
                {"discrepancy", r.discrepancy},
                {"tolerance", r.tolerance},
                {"pass", r.pass}};
}

// ---------------------------------------------------------------------------
// Attack models

inline json model_set_to_json(const AttackModelSet& m) {
    json attacks = json::array();
    for (const auto& a : m.attacks) {
        attacks.push_back({{"id", a.attack_id},
                           {"intercept", a.intercept},
                           {"severity", a.severity},
                           {"transfer_probability", a.transfer_probability}});
    }
    return json{{"attack_types", attacks},
                {"index_coefficients", {{"posture", m.index.posture}, {"environment", m.index.environment}}},
                {"index_weights", {{"environment", m.weights.environment}, {"posture", m.weights.posture}}}};
}

// Index coefficients are shared by every attack type. A per-type block may
// repeat them, but only with the shared values.
inline AttackModelSet model_set_from_json(const json& j) {
    check_keys(j, {"attack_types", "index_coefficients", "index_weights"}, {}, "model file");
    AttackModelSet m;
    const auto& ic = j.at("index_coefficients");
    check_keys(ic, {"posture", "environment"}, {}, "index_coefficients");
    m.index.posture = get<double>(ic, "posture", "index_coefficients");
    m.index.environment = get<double>(ic, "environment", "index_coefficients");
    const auto& iw = j.at("index_weights");
    check_keys(iw, {"environment", "posture"}, {}, "index_weights");
    m.weights.environment = get<std::vector<double>>(iw, "environment", "index_weights");
    m.weights.posture = get<std::vector<double>>(iw, "posture", "index_weights");
    for (const auto& a : j.at("attack_types")) {
        check_keys(a, {"id", "intercept", "severity", "transfer_probability"}, {"posture", "environment"},
                   "attack type");
        AttackVectorModel v;
        v.attack_id = get<std::string>(a, "id", "attack type");
        const std::string ctx = "attack type " + v.attack_id;
        v.intercept = get<double>(a, "intercept", ctx);
        v.severity = get<std::vector<double>>(a, "severity", ctx);
        v.transfer_probability = get<double>(a, "transfer_probability", ctx);
        if (a.contains("posture") && get<double>(a, "posture", ctx) != m.index.posture) {
            throw ValidationError(ctx + ": posture coefficient differs from the shared value");
        }
        if (a.contains("environment") && get<double>(a, "environment", ctx) != m.index.environment) {
            throw ValidationError(ctx + ": environment coefficient differs from the shared value");
        }
        m.attacks.push_back(std::move(v));
    }
    validate(m);
    return m;
}

// ---------------------------------------------------------------------------
// Impacts

inline QuantileSpec quantile_spec_from_json(const json& j, const std::string& ctx) {
    QuantileSpec s;
    s.probs = get<std::vector<double>>(j, "probs", ctx);
    s.values = get<std::vector<double>>(j, "values", ctx);
    return s;
}

inline json distribution_to_json(const FittedDistribution& d) {
    return json{{"family", to_string(d.family)},
                {"params", {d.first, d.second}},
                {"fit_residual", d.fit_residual},
                {"mean", mean(d)}};
}

// Accepts a fitted block {"family","params",...} or a quantile block
// {"family","probs","values"} which is fitted on load.
inline FittedDistribution distribution_from_json(const json& j, const std::string& ctx) {
    if (!j.is_object()) throw ValidationError(ctx + ": expected a JSON object");
    if (j.contains("params")) {
        check_keys(j, {"family", "params"}, {"fit_residual", "mean"}, ctx);
        FittedDistribution d;
        d.family = family_from_string(get<std::string>(j, "family", ctx));
        const auto p = get<std::vector<double>>(j, "params", ctx);
        if (p.size() != 2) throw ValidationError(ctx + ": params needs two values");
        d.first = p[0];
        d.second = p[1];
        if (j.contains("fit_residual")) d.fit_residual = get<double>(j, "fit_residual", ctx);
        validate(d);
        return d;
    }
    check_keys(j, {"family", "probs", "values"}, {}, ctx);
    return fit_quantiles(family_from_string(get<std::string>(j, "family", ctx)), quantile_spec_from_json(j, ctx));
}

inline ImpactModel impact_model_from_json(const json& j) {
    check_keys(j, {"company", "suppliers", "reputation", "market_share", "market_size"}, {"risk_aversion"},
               "impact file");
    ImpactModel m;
    const auto& c = j.at("company");
    check_keys(c, {"id", "downtime", "cost_per_hour"}, {}, "company impacts");
    m.company_id = get<std::string>(c, "id", "company impacts");
    m.company_downtime = distribution_from_json(c.at("downtime"), "company downtime");
    m.costs.company_cost_per_hour = get<double>(c, "cost_per_hour", "company impacts");
    for (const auto& s : j.at("suppliers")) {
        check_keys(s, {"id", "downtime", "cost_per_hour"}, {}, "supplier impacts");
        const auto id = get<std::string>(s, "id", "supplier impacts");
        m.supplier_downtime[id] = distribution_from_json(s.at("downtime"), "downtime of " + id);
        m.costs.supplier_cost_per_hour[id] = get<double>(s, "cost_per_hour", "supplier " + id);
    }
    m.lost_customers = distribution_from_json(j.at("reputation"), "reputation");
    if (m.company_downtime.family != Family::gamma) throw ValidationError("company downtime must be gamma");
    if (m.lost_customers.family != Family::beta) throw ValidationError("reputation must be a beta distribution");
    m.costs.market_share = get<double>(j, "market_share", "impact file");
    m.costs.market_size = get<double>(j, "market_size", "impact file");
    if (j.contains("risk_aversion")) m.costs.risk_aversion = get<double>(j, "risk_aversion", "impact file");
    if (!(m.costs.market_share >= 0.0 && m.costs.market_share <= 1.0)) {
        throw ValidationError("impact file: market_share must lie in [0,1]");
    }
    if (!(m.costs.market_size >= 0.0) || !(m.costs.company_cost_per_hour >= 0.0)) {
        throw ValidationError("impact file: costs must be non-negative");
    }
    return m;
}

inline json impact_model_to_json(const ImpactModel& m) {
    json suppliers = json::array();
    for (const auto& [id, d] : m.supplier_downtime) {
        suppliers.push_back({{"id", id},
                             {"downtime", distribution_to_json(d)},
                             {"cost_per_hour", m.costs.supplier_cost_per_hour.at(id)}});
    }
    return json{{"company",
                 {{"id", m.company_id},
                  {"downtime", distribution_to_json(m.company_downtime)},
                  {"cost_per_hour", m.costs.company_cost_per_hour}}},
                {"suppliers", suppliers},
                {"reputation", distribution_to_json(m.lost_customers)},
                {"market_share", m.costs.market_share},
                {"market_size", m.costs.market_size},
                {"risk_aversion", m.costs.risk_aversion}};
}

// ---------------------------------------------------------------------------
// Forecasting

inline json mat_to_json(const dlm::Mat2& m) { return json{{m[0][0], m[0][1]}, {m[1][0], m[1][1]}}; }

inline dlm::Mat2 mat_from_json(const json& j, const std::string& ctx) {
    const auto v = j.get<std::vector<std::vector<double>>>();
    if (v.size() != 2 || v[0].size() != 2 || v[1].size() != 2) throw ValidationError(ctx + ": expected 2x2 matrix");
    return {{{v[0][0], v[0][1]}, {v[1][0], v[1][1]}}};
}

inline json dlm_to_json(const dlm::DlmState& s) {
    json j{{"m", {s.m[0], s.m[1]}},
           {"C", mat_to_json(s.C)},
           {"V", s.V},
           {"W", mat_to_json(s.W)},
           {"variance_mode", s.variance_mode == dlm::VarianceMode::known ? "known" : "estimated"},
           {"variance_floor", s.variance_floor},
           {"variance_dof", s.variance_dof},
           {"t", s.t}};
    j["discount"] = s.discount ? json(*s.discount) : json(nullptr);
    return j;
}

inline dlm::DlmState dlm_from_json(const json& j) {
    const std::string ctx = "DLM checkpoint";
    check_keys(j, {"m", "C", "V", "W", "variance_mode", "variance_floor", "variance_dof", "t", "discount"}, {}, ctx);
    dlm::DlmState s;
    const auto m = get<std::vector<double>>(j, "m", ctx);
    if (m.size() != 2) throw ValidationError(ctx + ": m needs two values");
    s.m = {m[0], m[1]};
    s.C = mat_from_json(j.at("C"), ctx);
    s.W = mat_from_json(j.at("W"), ctx);
    s.V = get<double>(j, "V", ctx);
    const auto mode = get<std::string>(j, "variance_mode", ctx);
    if (mode != "known" && mode != "estimated") throw ValidationError(ctx + ": bad variance_mode");
    s.variance_mode = mode == "known" ? dlm::VarianceMode::known : dlm::VarianceMode::estimated;
    s.variance_floor = get<double>(j, "variance_floor", ctx);
    s.variance_dof = get<double>(j, "variance_dof", ctx);
    s.t = get<std::int64_t>(j, "t", ctx);
    if (!j.at("discount").is_null()) s.discount = get<double>(j, "discount", ctx);
    dlm::validate(s);
    return s;
}

inline json forecast_to_json(const dlm::Forecast& f) {
    return json{{"horizon", f.horizon}, {"t", f.time},         {"mean", f.mean},  {"variance", f.variance},
                {"lower", f.lower},     {"upper", f.upper},    {"alpha", f.alpha}};
}

inline json alarm_to_json(const dlm::AlarmEvent& a) {
    json j{{"kind", dlm::to_string(a.kind)}, {"indicator", a.indicator}, {"t", a.time},
           {"repeat_count", a.repeat_count}};
    if (a.kind == dlm::AlarmKind::horizon_threshold) {
        j["forecast"] = a.value;
        j["threshold"] = a.threshold;
        j["probability"] = a.probability;
        j["horizon"] = a.horizon;
    } else {
        j["observed"] = a.value;
        j["interval"] = {a.lower, a.upper};
    }
    return j;
}

// ---------------------------------------------------------------------------
// Scenarios

inline pipeline::ChannelProcess process_from_json(const json& j, pipeline::ChannelProcess base,
                                                  const std::string& ctx) {
    if (j.contains("base")) base.base = get<double>(j, "base", ctx);
    if (j.contains("drift")) base.drift = get<double>(j, "drift", ctx);
    if (j.contains("noise")) base.noise = get<double>(j, "noise", ctx);
    if (j.contains("change_points")) {
        base.change_points.clear();
        for (const auto& cp : j.at("change_points")) {
            check_keys(cp, {"t", "shift"}, {}, ctx + " change point");
            base.change_points.push_back({get<std::int64_t>(cp, "t", ctx), get<double>(cp, "shift", ctx)});
        }
    }
    return base;
}

inline pipeline::Scenario scenario_from_json(const json& j) {
    const std::string ctx = "scenario";
    check_keys(j, {"attack_types"}, {"seed", "steps", "company", "suppliers", "env_size", "posture_size",
                                     "defaults", "channels"},
               ctx);
    pipeline::Scenario s;
    if (j.contains("seed")) s.seed = get<std::uint64_t>(j, "seed", ctx);
    if (j.contains("steps")) s.steps = get<std::int64_t>(j, "steps", ctx);
    if (j.contains("company")) s.company = get<std::string>(j, "company", ctx);
    if (j.contains("suppliers")) s.suppliers = get<std::vector<std::string>>(j, "suppliers", ctx);
    if (j.contains("env_size")) s.env_size = get<std::size_t>(j, "env_size", ctx);
    if (j.contains("posture_size")) s.posture_size = get<std::size_t>(j, "posture_size", ctx);
    for (const auto& a : j.at("attack_types")) {
        check_keys(a, {"id", "levels"}, {}, "scenario attack type");
        s.attack_types.emplace_back(get<std::string>(a, "id", ctx), get<std::size_t>(a, "levels", ctx));
    }
    if (j.contains("defaults")) {
        check_keys(j.at("defaults"), {}, {"base", "drift", "noise", "change_points"}, "scenario defaults");
        s.defaults = process_from_json(j.at("defaults"), {}, "scenario defaults");
    }
    if (j.contains("channels")) {
        for (const auto& c : j.at("channels")) {
            check_keys(c, {"channel"}, {"org", "level", "base", "drift", "noise", "change_points"},
                       "scenario channel");
            pipeline::ChannelOverride o;
            o.channel = get<std::string>(c, "channel", ctx);
            if (c.contains("org")) o.org = get<std::string>(c, "org", ctx);
            if (c.contains("level")) o.level = get<std::size_t>(c, "level", ctx);
            o.process = process_from_json(c, s.defaults, "scenario channel " + o.channel);
            s.overrides.push_back(std::move(o));
        }
    }
    pipeline::validate(s);
    return s;
}

}  // namespace sccr::io
