#pragma once

// Operation loop: scan -> smoothing and scaling -> attack probabilities ->
// risks -> DLM update -> alarms -> report. Engine evaluation is pure; the
// StateStore persists history and state under a directory.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sccr/attack_model.hpp"
#include "sccr/errors.hpp"
#include "sccr/forecasting.hpp"
#include "sccr/impact_model.hpp"
#include "sccr/pipeline.hpp"
#include "sccr/report.hpp"
#include "sccr/risk_aggregation.hpp"
#include "sccr/serialization.hpp"

namespace sccr::engine {

using json = nlohmann::json;
using pipeline::ScanSnapshot;

struct HorizonAlarmConfig {
    double threshold = 1.0;
    int max_steps = 20;
    double min_probability = 0.5;
};

struct SlaLevel {
    std::string supplier;
    std::string indicator;  // defaults to IR:<supplier>
    double level = 0.0;
    int run_threshold = 3;
};

struct UtilityConfig {
    bool enabled = true;
    std::size_t draws = 100'000;
    std::uint64_t seed = 1;  // the draw at time t uses seed + t
};

struct EngineConfig {
    std::string company = "company";
    std::vector<std::string> suppliers;
    std::optional<std::size_t> attack_cap;    // default min(3, |A|)
    std::optional<std::size_t> supplier_cap;  // default |S|
    double smoothing = pipeline::kDefaultSmoothing;
    std::map<std::string, double> smoothing_overrides;  // "attacks.<id>", "env", "posture" or full channel key
    std::vector<pipeline::ScalerEntry> env_scaling;      // empty: values already in [0,1]
    std::vector<pipeline::ScalerEntry> posture_scaling;
    dlm::DlmConfig dlm;
    std::map<std::string, dlm::DlmConfig> dlm_overrides;
    double alpha = 0.05;
    std::map<std::string, HorizonAlarmConfig> horizon_alarms;
    std::vector<SlaLevel> sla;
    std::vector<std::string> indicators;  // default AP, IAP:<s>..., GAP, TR
    UtilityConfig utility;

    std::vector<std::string> organisations() const {
        std::vector<std::string> o{company};
        o.insert(o.end(), suppliers.begin(), suppliers.end());
        return o;
    }

    std::vector<std::string> monitored() const {
        if (!indicators.empty()) return indicators;
        std::vector<std::string> out{"AP"};
        for (const auto& s : suppliers) out.push_back("IAP:" + s);
        out.push_back("GAP");
        out.push_back("TR");
        return out;
    }
};

struct EngineState {
    std::int64_t t = -1;  // time of the last completed cycle
    std::map<std::string, std::map<std::string, pipeline::SmoothedSeries>> series;  // org -> channel
    std::map<std::string, dlm::DlmState> dlm;
    std::map<std::string, dlm::BreachHistory> breaches;
    std::map<std::string, int> sla_runs;  // "<supplier>|<indicator>" -> consecutive violations
    std::uint64_t history_bytes = 0;
    std::uint64_t history_records = 0;

    bool operator==(const EngineState&) const = default;
};

// Probabilities per attack type (model order) for the company and suppliers.
struct OrgProbabilities {
    std::vector<double> company;
    std::map<std::string, std::vector<double>> suppliers;
};

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline json dlm_config_to_json(const dlm::DlmConfig& c) {
    return json{{"discount", c.discount},
                {"variance_floor", c.variance_floor},
                {"observation_variance", c.observation_variance ? json(*c.observation_variance) : json(nullptr)}};
}

inline dlm::DlmConfig dlm_config_from_json(const json& j, dlm::DlmConfig base, const std::string& ctx) {
    io::check_keys(j, {}, {"discount", "variance_floor", "observation_variance", "overrides"}, ctx);
    if (j.contains("discount")) base.discount = io::get<double>(j, "discount", ctx);
    if (j.contains("variance_floor")) base.variance_floor = io::get<double>(j, "variance_floor", ctx);
    if (j.contains("observation_variance")) {
        if (j.at("observation_variance").is_null()) {
            base.observation_variance.reset();
        } else {
            base.observation_variance = io::get<double>(j, "observation_variance", ctx);
        }
    }
    if (!(base.discount > 0.0 && base.discount <= 1.0)) throw ValidationError(ctx + ": discount must lie in (0,1]");
    if (!(base.variance_floor > 0.0)) throw ValidationError(ctx + ": variance_floor must be positive");
    if (base.observation_variance && !(*base.observation_variance >= 0.0)) {
        throw ValidationError(ctx + ": observation_variance must be >= 0");
    }
    return base;
}

inline std::vector<pipeline::ScalerEntry> scalers_from_json(const json& j, const std::string& ctx) {
    std::vector<pipeline::ScalerEntry> out;
    for (const auto& e : j) {
        io::check_keys(e, {"lo", "hi"}, {}, ctx);
        pipeline::ScalerEntry s{io::get<double>(e, "lo", ctx), io::get<double>(e, "hi", ctx)};
        if (!(s.lo < s.hi)) throw ValidationError(ctx + ": scaler needs lo < hi");
        out.push_back(s);
    }
    return out;
}

inline json scalers_to_json(const std::vector<pipeline::ScalerEntry>& v) {
    json out = json::array();
    for (const auto& s : v) out.push_back({{"lo", s.lo}, {"hi", s.hi}});
    return out;
}

}  // namespace detail

inline json config_to_json(const EngineConfig& c) {
    json caps = json::object();
    caps["attacks"] = c.attack_cap ? json(*c.attack_cap) : json(nullptr);
    caps["suppliers"] = c.supplier_cap ? json(*c.supplier_cap) : json(nullptr);
    json dlm = detail::dlm_config_to_json(c.dlm);
    json overrides = json::object();
    for (const auto& [k, v] : c.dlm_overrides) overrides[k] = detail::dlm_config_to_json(v);
    dlm["overrides"] = overrides;
    json horizon = json::object();
    for (const auto& [k, h] : c.horizon_alarms) {
        horizon[k] = {{"threshold", h.threshold}, {"max_steps", h.max_steps}, {"min_probability", h.min_probability}};
    }
    json sla = json::array();
    for (const auto& s : c.sla) {
        sla.push_back({{"supplier", s.supplier},
                       {"indicator", s.indicator},
                       {"level", s.level},
                       {"run_threshold", s.run_threshold}});
    }
    return json{{"company", c.company},
                {"suppliers", c.suppliers},
                {"caps", caps},
                {"smoothing", {{"factor", c.smoothing}, {"overrides", c.smoothing_overrides}}},
                {"scaling",
                 {{"environment", detail::scalers_to_json(c.env_scaling)},
                  {"posture", detail::scalers_to_json(c.posture_scaling)}}},
                {"dlm", dlm},
                {"alarms", {{"alpha", c.alpha}, {"horizon", horizon}}},
                {"sla", sla},
                {"indicators", c.monitored()},
                {"utility", {{"enabled", c.utility.enabled}, {"draws", c.utility.draws}, {"seed", c.utility.seed}}}};
}

inline SlaLevel sla_level_from_json(const json& s) {
    const std::string ctx = "sla entry";
    io::check_keys(s, {"supplier", "level"}, {"indicator", "run_threshold"}, ctx);
    SlaLevel l;
    l.supplier = io::get<std::string>(s, "supplier", ctx);
    l.level = io::get<double>(s, "level", ctx);
    l.indicator = s.contains("indicator") ? io::get<std::string>(s, "indicator", ctx) : "IR:" + l.supplier;
    if (s.contains("run_threshold")) l.run_threshold = io::get<int>(s, "run_threshold", ctx);
    if (l.run_threshold < 1) throw ValidationError(ctx + ": run_threshold must be >= 1");
    if (!std::isfinite(l.level)) throw ValidationError(ctx + ": level must be finite");
    return l;
}

inline EngineConfig config_from_json(const json& j) {
    const std::string ctx = "engine config";
    io::check_keys(j, {"company", "suppliers"},
                   {"caps", "smoothing", "scaling", "dlm", "alarms", "sla", "indicators", "utility"}, ctx);
    EngineConfig c;
    c.company = io::get<std::string>(j, "company", ctx);
    c.suppliers = io::get<std::vector<std::string>>(j, "suppliers", ctx);
    std::set<std::string> orgs{c.company};
    for (const auto& s : c.suppliers) {
        if (!orgs.insert(s).second) throw ValidationError(ctx + ": duplicate organisation " + s);
    }
    if (j.contains("caps")) {
        const auto& k = j.at("caps");
        io::check_keys(k, {}, {"attacks", "suppliers"}, ctx + " caps");
        if (k.contains("attacks") && !k.at("attacks").is_null()) c.attack_cap = io::get<std::size_t>(k, "attacks", ctx);
        if (k.contains("suppliers") && !k.at("suppliers").is_null()) {
            c.supplier_cap = io::get<std::size_t>(k, "suppliers", ctx);
        }
    }
    if (j.contains("smoothing")) {
        const auto& s = j.at("smoothing");
        io::check_keys(s, {}, {"factor", "overrides"}, ctx + " smoothing");
        if (s.contains("factor")) c.smoothing = io::get<double>(s, "factor", ctx);
        if (s.contains("overrides")) c.smoothing_overrides = io::get<std::map<std::string, double>>(s, "overrides", ctx);
        auto check = [&](double h) {
            if (!(h > 0.0 && h <= 1.0)) throw ValidationError(ctx + ": smoothing factor must lie in (0,1]");
        };
        check(c.smoothing);
        for (const auto& [k, h] : c.smoothing_overrides) check(h);
    }
    if (j.contains("scaling")) {
        const auto& s = j.at("scaling");
        io::check_keys(s, {}, {"environment", "posture"}, ctx + " scaling");
        if (s.contains("environment")) c.env_scaling = detail::scalers_from_json(s.at("environment"), ctx + " scaling");
        if (s.contains("posture")) c.posture_scaling = detail::scalers_from_json(s.at("posture"), ctx + " scaling");
    }
    if (j.contains("dlm")) {
        c.dlm = detail::dlm_config_from_json(j.at("dlm"), c.dlm, ctx + " dlm");
        if (j.at("dlm").contains("overrides")) {
            for (const auto& [k, v] : j.at("dlm").at("overrides").items()) {
                c.dlm_overrides[k] = detail::dlm_config_from_json(v, c.dlm, ctx + " dlm override " + k);
            }
        }
    }
    if (j.contains("alarms")) {
        const auto& a = j.at("alarms");
        io::check_keys(a, {}, {"alpha", "horizon"}, ctx + " alarms");
        if (a.contains("alpha")) c.alpha = io::get<double>(a, "alpha", ctx);
        if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ValidationError(ctx + ": alpha must lie in (0,1)");
        if (a.contains("horizon")) {
            for (const auto& [k, h] : a.at("horizon").items()) {
                const std::string hctx = ctx + " horizon alarm " + k;
                io::check_keys(h, {"threshold"}, {"max_steps", "min_probability"}, hctx);
                HorizonAlarmConfig hc;
                hc.threshold = io::get<double>(h, "threshold", hctx);
                if (h.contains("max_steps")) hc.max_steps = io::get<int>(h, "max_steps", hctx);
                if (h.contains("min_probability")) hc.min_probability = io::get<double>(h, "min_probability", hctx);
                if (hc.max_steps < 1) throw ValidationError(hctx + ": max_steps must be >= 1");
                if (!(hc.min_probability > 0.0 && hc.min_probability < 1.0)) {
                    throw ValidationError(hctx + ": min_probability must lie in (0,1)");
                }
                c.horizon_alarms[k] = hc;
            }
        }
    }
    if (j.contains("sla")) {
        for (const auto& s : j.at("sla")) c.sla.push_back(sla_level_from_json(s));
    }
    if (j.contains("indicators")) c.indicators = io::get<std::vector<std::string>>(j, "indicators", ctx);
    if (j.contains("utility")) {
        const auto& u = j.at("utility");
        io::check_keys(u, {}, {"enabled", "draws", "seed"}, ctx + " utility");
        if (u.contains("enabled")) c.utility.enabled = io::get<bool>(u, "enabled", ctx);
        if (u.contains("draws")) c.utility.draws = io::get<std::size_t>(u, "draws", ctx);
        if (u.contains("seed")) c.utility.seed = io::get<std::uint64_t>(u, "seed", ctx);
        if (c.utility.enabled && c.utility.draws < 2) throw ValidationError(ctx + ": utility draws must be >= 2");
    }
    return c;
}

inline json state_to_json(const EngineState& s) {
    json series = json::object();
    for (const auto& [org, channels] : s.series) {
        json o = json::object();
        for (const auto& [k, v] : channels) {
            o[k] = {{"factor", v.factor}, {"value", v.value}, {"count", v.count}, {"min", v.min_seen},
                    {"max", v.max_seen}};
        }
        series[org] = o;
    }
    json dlm = json::object();
    for (const auto& [k, v] : s.dlm) dlm[k] = io::dlm_to_json(v);
    json breaches = json::object();
    for (const auto& [k, b] : s.breaches) {
        breaches[k] = {{"last_kind", b.last_kind ? json(dlm::to_string(*b.last_kind)) : json(nullptr)},
                       {"count", b.count}};
    }
    return json{{"t", s.t},
                {"series", series},
                {"dlm", dlm},
                {"breaches", breaches},
                {"sla_runs", s.sla_runs},
                {"history_bytes", s.history_bytes},
                {"history_records", s.history_records}};
}

inline EngineState state_from_json(const json& j) {
    const std::string ctx = "state file";
    io::check_keys(j, {"t", "series", "dlm", "breaches", "sla_runs", "history_bytes", "history_records"}, {}, ctx);
    EngineState s;
    s.t = io::get<std::int64_t>(j, "t", ctx);
    for (const auto& [org, channels] : j.at("series").items()) {
        for (const auto& [k, v] : channels.items()) {
            io::check_keys(v, {"factor", "value", "count", "min", "max"}, {}, ctx + " series");
            pipeline::SmoothedSeries ss;
            ss.factor = io::get<double>(v, "factor", ctx);
            ss.value = io::get<double>(v, "value", ctx);
            ss.count = io::get<std::size_t>(v, "count", ctx);
            ss.min_seen = io::get<double>(v, "min", ctx);
            ss.max_seen = io::get<double>(v, "max", ctx);
            s.series[org][k] = ss;
        }
    }
    for (const auto& [k, v] : j.at("dlm").items()) s.dlm[k] = io::dlm_from_json(v);
    for (const auto& [k, v] : j.at("breaches").items()) {
        io::check_keys(v, {"last_kind", "count"}, {}, ctx + " breaches");
        dlm::BreachHistory b;
        if (!v.at("last_kind").is_null()) b.last_kind = dlm::alarm_kind_from_string(v.at("last_kind").get<std::string>());
        b.count = io::get<int>(v, "count", ctx);
        s.breaches[k] = b;
    }
    s.sla_runs = io::get<std::map<std::string, int>>(j, "sla_runs", ctx);
    s.history_bytes = io::get<std::uint64_t>(j, "history_bytes", ctx);
    s.history_records = io::get<std::uint64_t>(j, "history_records", ctx);
    return s;
}

// ---------------------------------------------------------------------------
// Engine

class Engine {
public:
    Engine(EngineConfig config, AttackModelSet model, ImpactModel impacts)
        : config_(std::move(config)), model_(std::move(model)), impacts_(std::move(impacts)) {
        validate(model_);
        if (model_.attacks.empty()) throw ValidationError("model defines no attack types");
        const std::size_t na = model_.attacks.size();
        if (config_.attack_cap) {
            if (*config_.attack_cap < 1 || *config_.attack_cap > na) {
                throw ValidationError("attack cap must lie in 1.." + std::to_string(na));
            }
        } else {
            config_.attack_cap = std::min<std::size_t>(3, na);
        }
        const std::size_t ns = config_.suppliers.size();
        if (config_.supplier_cap) {
            if (ns > 0 && (*config_.supplier_cap < 1 || *config_.supplier_cap > ns)) {
                throw ValidationError("supplier cap must lie in 1.." + std::to_string(ns));
            }
        } else {
            config_.supplier_cap = std::max<std::size_t>(1, ns);
        }
        if (!config_.env_scaling.empty() && config_.env_scaling.size() != model_.weights.environment.size()) {
            throw ValidationError("environment scaling needs one entry per environment variable");
        }
        if (!config_.posture_scaling.empty() && config_.posture_scaling.size() != model_.weights.posture.size()) {
            throw ValidationError("posture scaling needs one entry per posture variable");
        }
        for (const auto& s : config_.suppliers) {
            if (!impacts_.supplier_downtime.contains(s)) {
                throw ValidationError("impact file has no downtime distribution for supplier " + s);
            }
        }
        costs_ = expected_costs(impacts_);
        std::set<std::string> known{"AP", "GAP", "R", "TR"};
        for (const auto& s : config_.suppliers) {
            known.insert("IAP:" + s);
            known.insert("IR:" + s);
        }
        for (const auto& k : config_.monitored()) {
            if (!known.contains(k)) throw ValidationError("unknown indicator " + k);
        }
        for (const auto& [k, h] : config_.horizon_alarms) {
            if (!known.contains(k)) throw ValidationError("horizon alarm on unknown indicator " + k);
        }
        for (const auto& l : config_.sla) validate_sla(l, known);
        for (const auto& a : model_.attacks) schema_.attack_levels[a.attack_id] = a.levels();
        schema_.env_size = model_.weights.environment.size();
        schema_.posture_size = model_.weights.posture.size();
        rehash();
    }

    const EngineConfig& config() const { return config_; }
    const AttackModelSet& model() const { return model_; }
    const ImpactModel& impacts() const { return impacts_; }
    const ExpectedCosts& costs() const { return costs_; }
    const pipeline::ScanSchema& schema() const { return schema_; }
    const std::string& config_hash() const { return hash_; }

    void set_sla(std::vector<SlaLevel> levels) {
        std::set<std::string> known{"AP", "GAP", "R", "TR"};
        for (const auto& s : config_.suppliers) {
            known.insert("IAP:" + s);
            known.insert("IR:" + s);
        }
        for (const auto& l : levels) validate_sla(l, known);
        config_.sla = std::move(levels);
        rehash();
    }

    // Smooths and scales one organisation's snapshot into model features.
    // Returns the per-attack feature vectors; appends data-quality warnings.
    std::map<std::string, FeatureVector> preprocess(std::map<std::string, pipeline::SmoothedSeries>& series,
                                                    const ScanSnapshot& snap,
                                                    std::vector<std::string>& warnings) const {
        auto step = [&](const std::string& key, const std::string& group, double x) {
            auto it = series.find(key);
            if (it == series.end()) {
                pipeline::SmoothedSeries fresh;
                fresh.factor = smoothing_for(key, group);
                it = series.emplace(key, fresh).first;
            }
            it->second = pipeline::smooth(it->second, x);
            return it->second.value;
        };
        auto scaled = [&](const std::vector<double>& raw, const std::vector<pipeline::ScalerEntry>& scalers,
                          const std::string& group) {
            std::vector<double> out(raw.size());
            for (std::size_t i = 0; i < raw.size(); ++i) {
                const double r = step(group + "." + std::to_string(i), group, raw[i]);
                const pipeline::ScalerEntry sc = scalers.empty() ? pipeline::ScalerEntry{0.0, 1.0} : scalers[i];
                const auto v = pipeline::scale_checked(r, sc);
                if (v.clamped) {
                    warnings.push_back(snap.org + ": " + group + "[" + std::to_string(i) +
                                       "] outside its scaling range, clamped");
                }
                out[i] = v.value;
            }
            return out;
        };
        const auto env = scaled(snap.env, config_.env_scaling, "env");
        const auto posture = scaled(snap.posture, config_.posture_scaling, "posture");
        const double e = environment_index(env, model_.weights.environment);
        const double l = posture_index(posture, model_.weights.posture);
        std::map<std::string, FeatureVector> out;
        for (const auto& a : model_.attacks) {
            const auto& raw = snap.attacks.at(a.attack_id);
            FeatureVector f;
            f.posture = l;
            f.environment = e;
            f.severity.resize(raw.size());
            for (std::size_t i = 0; i < raw.size(); ++i) {
                f.severity[i] = step("attacks." + a.attack_id + "." + std::to_string(i), "attacks." + a.attack_id,
                                     raw[i]);
                if (raw[i] > 100.0) {
                    warnings.push_back(snap.org + ": " + a.attack_id + " level " + std::to_string(i + 1) +
                                       " exceeds 100 percent of the fleet");
                }
            }
            out[a.attack_id] = std::move(f);
        }
        return out;
    }

    std::vector<double> probabilities(const std::map<std::string, FeatureVector>& features) const {
        std::vector<double> p;
        for (const auto& a : model_.attacks) p.push_back(attack_probability(a, model_.index, features.at(a.attack_id)));
        return p;
    }

    // Probabilities -> AP, IAP, GAP, R, IR, TR (and utilities when enabled).
    void fill_risks(const OrgProbabilities& probs, std::int64_t t, RiskReport& r) const {
        const std::size_t ka = *config_.attack_cap;
        std::vector<double> q;
        for (const auto& a : model_.attacks) q.push_back(a.transfer_probability);
        if (probs.company.size() != q.size()) throw ValidationError("company probability vector has the wrong size");
        r.probabilities[config_.company] = probs.company;
        r.ap = direct_attack_probability(probs.company, ka);
        r.r = direct_risk(r.ap, costs_.reputation, costs_.company_downtime);
        std::vector<double> iaps;
        std::vector<double> irs;
        std::vector<CappedSums> sums;
        for (const auto& s : config_.suppliers) {
            auto it = probs.suppliers.find(s);
            if (it == probs.suppliers.end()) throw ValidationError("no probabilities for supplier " + s);
            if (it->second.size() != q.size()) throw ValidationError("probability vector of " + s + " has the wrong size");
            r.probabilities[s] = it->second;
            const auto cs = capped_sums(it->second, q, ka);
            sums.push_back(cs);
            const double ir = cs.any * costs_.supplier_downtime.at(s) +
                              cs.transferred * (costs_.reputation + costs_.company_downtime);
            r.suppliers.push_back({s, cs.transferred, ir});
            iaps.push_back(cs.transferred);
            irs.push_back(ir);
        }
        r.gap = global_attack_probability(r.ap, iaps, *config_.supplier_cap);
        r.tr = total_risk(r.r, irs);
        r.indicators = {{"AP", r.ap}, {"GAP", r.gap}, {"R", r.r}, {"TR", r.tr}};
        for (const auto& s : r.suppliers) {
            r.indicators["IAP:" + s.id] = s.iap;
            r.indicators["IR:" + s.id] = s.ir;
        }
        if (config_.utility.enabled) {
            UtilityInputs in;
            in.direct_probability = r.ap;
            in.reputation = scaled_sampler(impacts_.lost_customers,
                                           impacts_.costs.market_share * impacts_.costs.market_size);
            in.company_downtime = scaled_sampler(impacts_.company_downtime, impacts_.costs.company_cost_per_hour);
            for (std::size_t i = 0; i < config_.suppliers.size(); ++i) {
                const auto& s = config_.suppliers[i];
                in.suppliers.push_back({s, sums[i],
                                        scaled_sampler(impacts_.supplier_downtime.at(s),
                                                       impacts_.costs.supplier_cost_per_hour.at(s))});
            }
            in.risk_aversion = impacts_.costs.risk_aversion;
            in.draws = config_.utility.draws;
            in.seed = config_.utility.seed + static_cast<std::uint64_t>(t);
            r.utilities = expected_utility_report(in);
        }
    }

    // DLM forecast/breach check/update for every monitored indicator, then
    // horizon alarms, SLA status and next-step forecasts.
    void monitor(EngineState& s, RiskReport& r) const {
        for (const auto& k : config_.monitored()) {
            const double x = r.indicators.at(k);
            auto it = s.dlm.find(k);
            if (it == s.dlm.end()) {
                s.dlm.emplace(k, dlm::initialize(x, r.t, dlm_config(k)));
                continue;
            }
            const auto fc = dlm::one_step(it->second, config_.alpha);
            if (auto ev = dlm::breach_alarm(fc, x, s.breaches[k], k)) r.alarms.push_back(*ev);
            it->second = dlm::filter_step(it->second, x);
        }
        for (const auto& [k, h] : config_.horizon_alarms) {
            auto it = s.dlm.find(k);
            if (it == s.dlm.end()) continue;
            if (auto ev = dlm::horizon_alarm(it->second, h.threshold, h.max_steps, h.min_probability, k, config_.alpha)) {
                r.alarms.push_back(*ev);
            }
        }
        for (const auto& [k, st] : s.dlm) r.next[k] = dlm::one_step(st, config_.alpha);
        for (const auto& l : config_.sla) {
            SlaStatus st;
            st.supplier = l.supplier;
            st.indicator = l.indicator;
            st.level = l.level;
            st.value = r.indicators.at(l.indicator);
            st.violated = st.value > l.level;
            int& run = s.sla_runs[l.supplier + "|" + l.indicator];
            run = st.violated ? run + 1 : 0;
            st.run_length = run;
            st.breach = run >= l.run_threshold;
            r.sla.push_back(st);
        }
    }

    // One full cycle on a copy of `state`. Throws without side effects when the
    // snapshots do not cover every organisation exactly once at t = state.t + 1.
    std::pair<EngineState, RiskReport> run_cycle(const EngineState& state,
                                                 std::span<const ScanSnapshot> snapshots) const {
        const std::int64_t t = state.t + 1;
        const auto by_org = index_snapshots(snapshots, t);
        EngineState next = state;
        RiskReport r;
        r.t = t;
        r.config_hash = hash_;
        OrgProbabilities probs;
        for (const auto& org : config_.organisations()) {
            const auto features = preprocess(next.series[org], *by_org.at(org), r.warnings);
            auto p = probabilities(features);
            if (org == config_.company) {
                probs.company = std::move(p);
            } else {
                probs.suppliers[org] = std::move(p);
            }
        }
        fill_risks(probs, t, r);
        monitor(next, r);
        next.t = t;
        return {std::move(next), std::move(r)};
    }

    // Same as run_cycle with probabilities supplied directly (skips the scan
    // preprocessing), for injecting externally computed probabilities.
    std::pair<EngineState, RiskReport> run_with_probabilities(const EngineState& state,
                                                              const OrgProbabilities& probs) const {
        EngineState next = state;
        RiskReport r;
        r.t = state.t + 1;
        r.config_hash = hash_;
        fill_risks(probs, r.t, r);
        monitor(next, r);
        next.t = r.t;
        return {std::move(next), std::move(r)};
    }

    // What-if evaluation: runs the cycle on a copy and flags the result.
    RiskReport what_if(const EngineState& state, std::vector<ScanSnapshot> snapshots) const {
        for (auto& s : snapshots) s.t = state.t + 1;
        auto [ignored, report] = run_cycle(state, snapshots);
        report.ephemeral = true;
        return report;
    }

private:
    void validate_sla(const SlaLevel& l, const std::set<std::string>& known) const {
        if (std::find(config_.suppliers.begin(), config_.suppliers.end(), l.supplier) == config_.suppliers.end()) {
            throw ValidationError("SLA level for unknown supplier " + l.supplier);
        }
        if (!known.contains(l.indicator)) throw ValidationError("SLA on unknown indicator " + l.indicator);
        if (l.run_threshold < 1) throw ValidationError("SLA run threshold must be >= 1");
    }

    void rehash() {
        std::uint64_t h = detail::fnv1a(config_to_json(config_).dump());
        h = detail::fnv1a(io::model_set_to_json(model_).dump(), h);
        h = detail::fnv1a(io::impact_model_to_json(impacts_).dump(), h);
        hash_ = detail::hex(h);
    }

    double smoothing_for(const std::string& key, const std::string& group) const {
        if (auto it = config_.smoothing_overrides.find(key); it != config_.smoothing_overrides.end()) return it->second;
        if (auto it = config_.smoothing_overrides.find(group); it != config_.smoothing_overrides.end()) {
            return it->second;
        }
        return config_.smoothing;
    }

    dlm::DlmConfig dlm_config(const std::string& indicator) const {
        auto it = config_.dlm_overrides.find(indicator);
        return it == config_.dlm_overrides.end() ? config_.dlm : it->second;
    }

    std::map<std::string, const ScanSnapshot*> index_snapshots(std::span<const ScanSnapshot> snapshots,
                                                               std::int64_t t) const {
        std::map<std::string, const ScanSnapshot*> by_org;
        const auto orgs = config_.organisations();
        for (const auto& s : snapshots) {
            if (std::find(orgs.begin(), orgs.end(), s.org) == orgs.end()) {
                throw ValidationError("snapshot for unknown organisation " + s.org);
            }
            if (s.t != t) {
                throw ValidationError("snapshot for " + s.org + " has t=" + std::to_string(s.t) + ", expected " +
                                      std::to_string(t));
            }
            if (!by_org.emplace(s.org, &s).second) throw ValidationError("duplicate snapshot for " + s.org);
            // Re-check in-memory snapshots against the model schema.
            pipeline::scan_from_json(pipeline::scan_to_json(s), schema_);
        }
        for (const auto& o : orgs) {
            if (!by_org.contains(o)) throw ValidationError("missing snapshot for " + o + " at t=" + std::to_string(t));
        }
        return by_org;
    }

    EngineConfig config_;
    AttackModelSet model_;
    ImpactModel impacts_;
    ExpectedCosts costs_;
    pipeline::ScanSchema schema_;
    std::string hash_;
};

// Groups a time-ordered scan stream into per-time batches.
inline std::vector<std::vector<ScanSnapshot>> group_by_time(const std::vector<ScanSnapshot>& scans) {
    std::vector<std::vector<ScanSnapshot>> out;
    for (const auto& s : scans) {
        if (out.empty() || out.back().front().t != s.t) {
            if (!out.empty() && s.t < out.back().front().t) {
                throw ValidationError("scan stream is not ordered by time (t=" + std::to_string(s.t) + ")");
            }
            out.emplace_back();
        }
        out.back().push_back(s);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Persistence

// State directory layout: state.json (EngineState) and history.jsonl (one
// report per line). A commit appends the report, then atomically replaces the
// state; state.json records the history length it is consistent with, so a
// crash between the two steps is repaired on the next load.
class StateStore {
public:
    using FaultHook = std::function<void(const std::string& stage)>;

    explicit StateStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

    const std::filesystem::path& dir() const { return dir_; }
    std::filesystem::path state_path() const { return dir_ / "state.json"; }
    std::filesystem::path history_path() const { return dir_ / "history.jsonl"; }

    // Test hook called at each commit stage; throwing simulates a failure.
    void set_fault_hook(FaultHook hook) { fault_ = std::move(hook); }

    EngineState load() const {
        std::filesystem::create_directories(dir_);
        if (!std::filesystem::exists(state_path())) {
            if (std::filesystem::exists(history_path()) && std::filesystem::file_size(history_path()) > 0) {
                std::filesystem::resize_file(history_path(), 0);
            }
            return {};
        }
        EngineState s;
        try {
            s = state_from_json(io::read_json_file(state_path().string()));
        } catch (const ValidationError& e) {
            throw IoError("corrupt state file " + state_path().string() + ": " + e.what());
        }
        const std::uint64_t have =
            std::filesystem::exists(history_path()) ? std::filesystem::file_size(history_path()) : 0;
        if (have < s.history_bytes) {
            throw IoError("history file is shorter than the state expects; refusing to continue");
        }
        if (have > s.history_bytes) std::filesystem::resize_file(history_path(), s.history_bytes);
        return s;
    }

    // Persists `report` and then `next`. On failure both files keep their
    // previous contents and the exception propagates.
    void commit(const EngineState& previous, EngineState next, const RiskReport& report) {
        std::filesystem::create_directories(dir_);
        const std::string line = io::report_to_json(report).dump() + "\n";
        next.history_bytes = previous.history_bytes + line.size();
        next.history_records = previous.history_records + 1;
        const auto tmp = dir_ / "state.json.tmp";
        const bool had_state = std::filesystem::exists(state_path());
        bool appended = false;
        try {
            fault("prepare");
            io::write_text_file(tmp.string(), state_to_json(next).dump() + "\n");
            fault("state_written");
            {
                std::ofstream out(history_path(), std::ios::app | std::ios::binary);
                if (!out) throw IoError("cannot open " + history_path().string());
                appended = true;
                out << line;
                out.flush();
                if (!out) throw IoError("failed to append to " + history_path().string());
            }
            fault("history_appended");
            std::filesystem::rename(tmp, state_path());
            fault("committed");
        } catch (...) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            if (appended && std::filesystem::exists(history_path())) {
                std::filesystem::resize_file(history_path(), previous.history_bytes, ec);
            }
            // A failure after the rename cannot be undone here; restore the
            // previous state file so both files agree again.
            if (!had_state) {
                std::filesystem::remove(state_path(), ec);
            } else {
                auto cur = state_from_json(io::read_json_file(state_path().string()));
                if (cur.history_bytes != previous.history_bytes) {
                    io::write_text_file(state_path().string(), state_to_json(previous).dump() + "\n");
                }
            }
            throw;
        }
    }

    std::vector<json> history() const {
        std::vector<json> out;
        std::ifstream in(history_path());
        if (!in) return out;
        std::string line;
        std::size_t n = 0;
        while (std::getline(in, line)) {
            ++n;
            if (line.empty()) continue;
            try {
                out.push_back(json::parse(line));
            } catch (const json::parse_error&) {
                throw IoError("history line " + std::to_string(n) + " is not valid JSON");
            }
        }
        return out;
    }

    std::vector<RiskReport> reports() const {
        std::vector<RiskReport> out;
        for (const auto& j : history()) out.push_back(io::report_from_json(j));
        return out;
    }

private:
    void fault(const std::string& stage) const {
        if (fault_) fault_(stage);
    }

    std::filesystem::path dir_;
    FaultHook fault_;
};

// Engine plus persisted state; the single writer behind CLI runs and the
// HTTP server.
class Runner {
public:
    Runner(Engine engine, StateStore store) : engine_(std::move(engine)), store_(std::move(store)) {
        state_ = store_.load();
    }

    const Engine& engine() const { return engine_; }
    Engine& engine() { return engine_; }
    const EngineState& state() const { return state_; }
    StateStore& store() { return store_; }

    RiskReport step(std::span<const ScanSnapshot> snapshots) {
        auto [next, report] = engine_.run_cycle(state_, snapshots);
        store_.commit(state_, next, report);
        state_ = store_.load();
        return report;
    }

    RiskReport step_with_probabilities(const OrgProbabilities& probs) {
        auto [next, report] = engine_.run_with_probabilities(state_, probs);
        store_.commit(state_, next, report);
        state_ = store_.load();
        return report;
    }

private:
    Engine engine_;
    StateStore store_;
    EngineState state_;
};

inline std::string reports_to_csv(const std::vector<RiskReport>& reports, const std::vector<std::string>& suppliers) {
    std::ostringstream out;
    out.precision(17);
    out << "t,AP,GAP,R,TR";
    for (const auto& s : suppliers) out << ",IAP:" << s << ",IR:" << s;
    out << "\n";
    for (const auto& r : reports) {
        out << r.t << ',' << r.ap << ',' << r.gap << ',' << r.r << ',' << r.tr;
        for (const auto& s : suppliers) {
            const auto* f = r.supplier(s);
            if (f) {
                out << ',' << f->iap << ',' << f->ir;
            } else {
                out << ",,";
            }
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace sccr::engine
