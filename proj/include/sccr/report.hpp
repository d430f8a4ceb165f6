#pragma once

// Per-cycle risk report, its JSON form, supplier ranking and SLA checks.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sccr/forecasting.hpp"
#include "sccr/risk_aggregation.hpp"
#include "sccr/serialization.hpp"

namespace sccr {

struct SupplierFigures {
    std::string id;
    double iap = 0.0;
    double ir = 0.0;
};

struct SlaStatus {
    std::string supplier;
    std::string indicator;
    double level = 0.0;
    double value = 0.0;
    bool violated = false;
    int run_length = 0;  // consecutive violations up to and including this cycle
    bool breach = false;
};

struct RiskReport {
    std::int64_t t = 0;
    double ap = 0.0;
    double gap = 0.0;
    double r = 0.0;
    double tr = 0.0;
    std::vector<SupplierFigures> suppliers;            // configured order
    std::map<std::string, std::vector<double>> probabilities;  // org -> per attack type
    std::map<std::string, double> indicators;
    std::optional<UtilityReport> utilities;
    std::vector<dlm::AlarmEvent> alarms;
    std::map<std::string, dlm::Forecast> next;  // one-step forecasts for t + 1
    std::vector<SlaStatus> sla;
    std::vector<std::string> warnings;
    std::string config_hash;
    bool ephemeral = false;

    const SupplierFigures* supplier(const std::string& id) const {
        for (const auto& s : suppliers) {
            if (s.id == id) return &s;
        }
        return nullptr;
    }
};

namespace io {

inline json estimate_to_json(const Estimate& e) { return json{{"mean", e.mean}, {"se", e.standard_error}}; }

inline json report_to_json(const RiskReport& r) {
    json suppliers = json::array();
    for (const auto& s : r.suppliers) suppliers.push_back({{"id", s.id}, {"IAP", s.iap}, {"IR", s.ir}});
    json alarms = json::array();
    for (const auto& a : r.alarms) alarms.push_back(alarm_to_json(a));
    json next = json::object();
    for (const auto& [k, f] : r.next) next[k] = forecast_to_json(f);
    json sla = json::array();
    for (const auto& s : r.sla) {
        sla.push_back({{"supplier", s.supplier},
                       {"indicator", s.indicator},
                       {"level", s.level},
                       {"value", s.value},
                       {"violated", s.violated},
                       {"run_length", s.run_length},
                       {"breach", s.breach}});
    }
    json utilities = nullptr;
    if (r.utilities) {
        json induced = json::object();
        for (const auto& [k, e] : r.utilities->induced) induced[k] = estimate_to_json(e);
        utilities = {{"direct", estimate_to_json(r.utilities->direct)},
                     {"induced", induced},
                     {"total", estimate_to_json(r.utilities->total)}};
    }
    return json{{"t", r.t},
                {"AP", r.ap},
                {"GAP", r.gap},
                {"R", r.r},
                {"TR", r.tr},
                {"suppliers", suppliers},
                {"probabilities", r.probabilities},
                {"indicators", r.indicators},
                {"utilities", utilities},
                {"alarms", alarms},
                {"forecasts", next},
                {"sla", sla},
                {"warnings", r.warnings},
                {"config_hash", r.config_hash},
                {"ephemeral", r.ephemeral}};
}

// Restores the numeric core of a report (enough for ranking and SLA replay).
// Alarms, forecasts and utilities are not read back.
inline RiskReport report_from_json(const json& j) {
    const std::string ctx = "report";
    RiskReport r;
    r.t = get<std::int64_t>(j, "t", ctx);
    r.ap = get<double>(j, "AP", ctx);
    r.gap = get<double>(j, "GAP", ctx);
    r.r = get<double>(j, "R", ctx);
    r.tr = get<double>(j, "TR", ctx);
    for (const auto& s : j.at("suppliers")) {
        r.suppliers.push_back({get<std::string>(s, "id", ctx), get<double>(s, "IAP", ctx), get<double>(s, "IR", ctx)});
    }
    r.probabilities = get<std::map<std::string, std::vector<double>>>(j, "probabilities", ctx);
    r.indicators = get<std::map<std::string, double>>(j, "indicators", ctx);
    r.warnings = get<std::vector<std::string>>(j, "warnings", ctx);
    r.config_hash = get<std::string>(j, "config_hash", ctx);
    r.ephemeral = get<bool>(j, "ephemeral", ctx);
    return r;
}

}  // namespace io

// ---------------------------------------------------------------------------
// Supplier ranking

enum class RankKey { ir, iap };

inline RankKey rank_key_from_string(const std::string& s) {
    if (s == "IR") return RankKey::ir;
    if (s == "IAP") return RankKey::iap;
    throw ValidationError("ranking key must be IR or IAP, got '" + s + "'");
}

struct RankEntry {
    std::string supplier;
    double score = 0.0;
};

// Ascending score (lower induced risk is preferred); ties go to the
// lexicographically smaller supplier id. With window > 1 the score is the mean
// over the last `window` reports in which the supplier appears.
inline std::vector<RankEntry> rank_suppliers(std::span<const RiskReport> reports, RankKey key,
                                             std::size_t window = 1) {
    if (reports.empty()) return {};
    if (window == 0) window = 1;
    const std::size_t first = reports.size() > window ? reports.size() - window : 0;
    std::map<std::string, std::pair<double, std::size_t>> acc;
    for (std::size_t i = first; i < reports.size(); ++i) {
        for (const auto& s : reports[i].suppliers) {
            auto& [sum, n] = acc[s.id];
            sum += key == RankKey::ir ? s.ir : s.iap;
            ++n;
        }
    }
    std::vector<RankEntry> out;
    for (const auto& [id, v] : acc) out.push_back({id, v.first / static_cast<double>(v.second)});
    std::stable_sort(out.begin(), out.end(), [](const RankEntry& a, const RankEntry& b) {
        if (a.score != b.score) return a.score < b.score;
        return a.supplier < b.supplier;
    });
    return out;
}

// ---------------------------------------------------------------------------
// SLA checks

struct ViolationRun {
    std::int64_t start = 0;
    std::int64_t end = 0;
    int length = 0;
};

struct SlaReport {
    double level = 0.0;
    int run_threshold = 1;
    std::vector<std::int64_t> violations;
    std::vector<ViolationRun> runs;
    bool breach = false;
    std::optional<std::int64_t> breach_time;  // when the first run reached the threshold
};

// Violation means value > level. Runs are maximal stretches of consecutive
// time indices in violation.
inline SlaReport sla_check(std::span<const std::pair<std::int64_t, double>> series, double level,
                           int run_threshold) {
    if (run_threshold < 1) throw ValidationError("SLA run threshold must be >= 1");
    SlaReport rep;
    rep.level = level;
    rep.run_threshold = run_threshold;
    std::optional<ViolationRun> open;
    for (const auto& [t, x] : series) {
        const bool bad = x > level;
        if (bad) {
            rep.violations.push_back(t);
            if (open && open->end + 1 == t) {
                open->end = t;
                ++open->length;
            } else {
                if (open) rep.runs.push_back(*open);
                open = ViolationRun{t, t, 1};
            }
            if (open->length >= run_threshold && !rep.breach) {
                rep.breach = true;
                rep.breach_time = t;
            }
        } else if (open) {
            rep.runs.push_back(*open);
            open.reset();
        }
    }
    if (open) rep.runs.push_back(*open);
    return rep;
}

inline std::vector<std::pair<std::int64_t, double>> indicator_series(std::span<const RiskReport> reports,
                                                                     const std::string& indicator) {
    std::vector<std::pair<std::int64_t, double>> out;
    for (const auto& r : reports) {
        auto it = r.indicators.find(indicator);
        if (it == r.indicators.end()) throw ValidationError("report at t=" + std::to_string(r.t) +
                                                            " has no indicator " + indicator);
        out.emplace_back(r.t, it->second);
    }
    return out;
}

namespace io {

inline json ranking_to_json(const std::vector<RankEntry>& v, RankKey key) {
    json arr = json::array();
    for (std::size_t i = 0; i < v.size(); ++i) {
        arr.push_back({{"rank", i + 1}, {"supplier", v[i].supplier}, {"score", v[i].score}});
    }
    return json{{"key", key == RankKey::ir ? "IR" : "IAP"}, {"ranking", arr}};
}

inline json sla_report_to_json(const SlaReport& s) {
    json runs = json::array();
    for (const auto& r : s.runs) runs.push_back({{"start", r.start}, {"end", r.end}, {"length", r.length}});
    return json{{"level", s.level},
                {"run_threshold", s.run_threshold},
                {"violations", s.violations},
                {"runs", runs},
                {"breach", s.breach},
                {"breach_time", s.breach_time ? json(*s.breach_time) : json(nullptr)}};
}

}  // namespace io

}  // namespace sccr
