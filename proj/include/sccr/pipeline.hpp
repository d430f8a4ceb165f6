#pragma once

// Scan ingestion and preprocessing: strict JSONL scan records, exponential
// smoothing, min-max scaling and a seeded scan simulator.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sccr/errors.hpp"

namespace sccr::pipeline {

using json = nlohmann::json;

struct ScanSnapshot {
    std::string org;
    std::int64_t t = 0;
    std::map<std::string, std::vector<double>> attacks;  // attack id -> severity counts
    std::vector<double> env;
    std::vector<double> posture;

    bool operator==(const ScanSnapshot&) const = default;
};

// What a valid scan must contain.
struct ScanSchema {
    std::map<std::string, std::size_t> attack_levels;
    std::size_t env_size = 0;
    std::size_t posture_size = 0;
};

// ---------------------------------------------------------------------------
// Smoothing

struct SmoothedSeries {
    double factor = 0.3;  // h in (0,1]
    double value = 0.0;
    std::size_t count = 0;
    double min_seen = 0.0;
    double max_seen = 0.0;

    bool operator==(const SmoothedSeries&) const = default;
};

inline constexpr double kDefaultSmoothing = 0.3;

// r_0 = x_0, r_j = h x_j + (1 - h) r_{j-1}
inline SmoothedSeries smooth(SmoothedSeries s, double x) {
    if (!std::isfinite(x)) throw ValidationError("cannot smooth a non-finite value");
    if (!(s.factor > 0.0 && s.factor <= 1.0)) {
        throw ValidationError("smoothing factor must lie in (0,1]");
    }
    if (s.count == 0) {
        s.value = x;
        s.min_seen = x;
        s.max_seen = x;
    } else {
        s.value = s.factor * x + (1.0 - s.factor) * s.value;
        s.min_seen = std::min(s.min_seen, x);
        s.max_seen = std::max(s.max_seen, x);
    }
    ++s.count;
    return s;
}

// Smallest k* with (1 - h)^{k*} < tail: observations older than k* scans carry
// less than `tail` of the total weight.
inline std::size_t effective_window(double factor, double tail = 0.01) {
    if (!(factor > 0.0 && factor <= 1.0)) throw ValidationError("smoothing factor must lie in (0,1]");
    if (factor == 1.0) return 1;
    return static_cast<std::size_t>(std::floor(std::log(tail) / std::log1p(-factor))) + 1;
}

// ---------------------------------------------------------------------------
// Scaling

struct ScalerEntry {
    double lo = 0.0;
    double hi = 1.0;
};

struct ScaledValue {
    double value = 0.0;
    bool clamped = false;
};

inline ScaledValue scale_checked(double value, const ScalerEntry& cfg) {
    if (!(cfg.lo < cfg.hi)) throw ValidationError("scaler bounds need lo < hi");
    const double raw = (value - cfg.lo) / (cfg.hi - cfg.lo);
    if (raw < 0.0) return {0.0, true};
    if (raw > 1.0) return {1.0, true};
    return {raw, false};
}

inline double scale(double value, const ScalerEntry& cfg) { return scale_checked(value, cfg).value; }

// ---------------------------------------------------------------------------
// Scan records

namespace detail {

inline std::string where(std::size_t line) {
    return line == 0 ? std::string("scan record") : "line " + std::to_string(line);
}

inline std::vector<double> read_counts(const json& j, const std::string& field, std::size_t line) {
    if (!j.is_array()) throw ValidationError(where(line) + ": field '" + field + "' must be an array");
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& v : j) {
        if (!v.is_number()) {
            throw ValidationError(where(line) + ": field '" + field + "' must contain numbers");
        }
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw ValidationError(where(line) + ": non-finite value in '" + field + "'");
        if (d < 0.0) throw ValidationError(where(line) + ": negative count in '" + field + "'");
        out.push_back(d);
    }
    return out;
}

}  // namespace detail

inline ScanSnapshot scan_from_json(const json& j, const ScanSchema& schema, std::size_t line = 0) {
    using detail::where;
    if (!j.is_object()) throw ValidationError(where(line) + ": scan record must be a JSON object");
    static const std::set<std::string> allowed{"org", "t", "attacks", "env", "posture"};
    for (const auto& [key, _] : j.items()) {
        if (!allowed.contains(key)) {
            throw ValidationError(where(line) + ": unknown field '" + key + "'");
        }
    }
    for (const auto& key : allowed) {
        if (!j.contains(key)) throw ValidationError(where(line) + ": missing field '" + key + "'");
    }
    ScanSnapshot s;
    if (!j["org"].is_string()) throw ValidationError(where(line) + ": field 'org' must be a string");
    s.org = j["org"].get<std::string>();
    if (!j["t"].is_number_integer()) throw ValidationError(where(line) + ": field 't' must be an integer");
    s.t = j["t"].get<std::int64_t>();
    const auto& attacks = j["attacks"];
    if (!attacks.is_object()) throw ValidationError(where(line) + ": field 'attacks' must be an object");
    for (const auto& [id, counts] : attacks.items()) {
        auto it = schema.attack_levels.find(id);
        if (it == schema.attack_levels.end()) {
            throw ValidationError(where(line) + ": unknown attack type '" + id + "'");
        }
        auto v = detail::read_counts(counts, "attacks." + id, line);
        if (v.size() != it->second) {
            throw ValidationError(where(line) + ": attack type '" + id + "' needs " +
                                  std::to_string(it->second) + " severity counts");
        }
        s.attacks.emplace(id, std::move(v));
    }
    for (const auto& [id, levels] : schema.attack_levels) {
        if (!s.attacks.contains(id)) {
            throw ValidationError(where(line) + ": missing channel 'attacks." + id + "'");
        }
    }
    s.env = detail::read_counts(j["env"], "env", line);
    s.posture = detail::read_counts(j["posture"], "posture", line);
    if (s.env.size() != schema.env_size) {
        throw ValidationError(where(line) + ": field 'env' needs " + std::to_string(schema.env_size) +
                              " values");
    }
    if (s.posture.size() != schema.posture_size) {
        throw ValidationError(where(line) + ": field 'posture' needs " +
                              std::to_string(schema.posture_size) + " values");
    }
    return s;
}

inline json scan_to_json(const ScanSnapshot& s) {
    json attacks = json::object();
    for (const auto& [id, v] : s.attacks) attacks[id] = v;
    return json{{"org", s.org}, {"t", s.t}, {"attacks", attacks}, {"env", s.env}, {"posture", s.posture}};
}

inline ScanSnapshot parse_scan(const std::string& line_text, const ScanSchema& schema,
                               std::size_t line = 0) {
    json j;
    try {
        j = json::parse(line_text);
    } catch (const json::parse_error& e) {
        throw ValidationError(detail::where(line) + ": malformed JSON at byte " +
                              std::to_string(e.byte) + ": " + e.what());
    }
    return scan_from_json(j, schema, line);
}

inline std::string write_scan(const ScanSnapshot& s) { return scan_to_json(s).dump(); }

// Reads a scans.jsonl stream. Blank lines are skipped; line numbers are 1-based.
inline std::vector<ScanSnapshot> read_scans(std::istream& in, const ScanSchema& schema) {
    std::vector<ScanSnapshot> out;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (!text.empty() && text.back() == '\r') text.pop_back();
        if (text.find_first_not_of(" \t") == std::string::npos) continue;
        out.push_back(parse_scan(text, schema, line));
    }
    return out;
}

inline void write_scans(std::ostream& out, const std::vector<ScanSnapshot>& scans) {
    for (const auto& s : scans) out << write_scan(s) << '\n';
}

// ---------------------------------------------------------------------------
// Simulation

struct ChangePoint {
    std::int64_t t = 0;
    double shift = 0.0;
};

// value_j = max(0, base + drift * j + sum of shifts with t <= j + noise * z_j)
struct ChannelProcess {
    double base = 0.0;
    double drift = 0.0;
    double noise = 0.0;
    std::vector<ChangePoint> change_points;
};

// Applies to every channel matching org ("*" for all), channel ("attacks.<id>",
// "env" or "posture") and level (all levels when absent). Later entries win.
struct ChannelOverride {
    std::string org = "*";
    std::string channel;
    std::optional<std::size_t> level;
    ChannelProcess process;
};

struct Scenario {
    std::uint64_t seed = 1;
    std::int64_t steps = 100;
    std::string company = "company";
    std::vector<std::string> suppliers;
    std::vector<std::pair<std::string, std::size_t>> attack_types;
    std::size_t env_size = 1;
    std::size_t posture_size = 1;
    ChannelProcess defaults;
    std::vector<ChannelOverride> overrides;

    std::vector<std::string> organisations() const {
        std::vector<std::string> orgs{company};
        orgs.insert(orgs.end(), suppliers.begin(), suppliers.end());
        return orgs;
    }

    ScanSchema schema() const {
        ScanSchema s;
        for (const auto& [id, levels] : attack_types) s.attack_levels[id] = levels;
        s.env_size = env_size;
        s.posture_size = posture_size;
        return s;
    }
};

namespace detail {

inline std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline const ChannelProcess& resolve(const Scenario& sc, const std::string& org,
                                     const std::string& channel, std::size_t level) {
    const ChannelProcess* p = &sc.defaults;
    for (const auto& o : sc.overrides) {
        if ((o.org == "*" || o.org == org) && o.channel == channel && (!o.level || *o.level == level)) {
            p = &o.process;
        }
    }
    return *p;
}

inline double draw(const ChannelProcess& p, std::int64_t j, std::uint64_t stream) {
    double v = p.base + p.drift * static_cast<double>(j);
    for (const auto& cp : p.change_points) {
        if (cp.t <= j) v += cp.shift;
    }
    if (p.noise > 0.0) {
        std::mt19937_64 rng(stream);
        std::normal_distribution<double> z(0.0, 1.0);
        v += p.noise * z(rng);
    }
    return std::max(0.0, v);
}

}  // namespace detail

inline void validate(const Scenario& sc) {
    if (sc.steps < 1) throw ValidationError("scenario needs at least one step");
    if (sc.company.empty()) throw ValidationError("scenario needs a company id");
    if (sc.attack_types.empty()) throw ValidationError("scenario needs at least one attack type");
    std::set<std::string> ids{sc.company};
    for (const auto& s : sc.suppliers) {
        if (!ids.insert(s).second) throw ValidationError("duplicate organisation id " + s);
    }
    std::set<std::string> known_channels{"env", "posture"};
    for (const auto& [id, levels] : sc.attack_types) {
        if (levels == 0) throw ValidationError("attack type " + id + " needs at least one level");
        known_channels.insert("attacks." + id);
    }
    auto check = [](const ChannelProcess& p) {
        if (!std::isfinite(p.base) || !std::isfinite(p.drift) || !(p.noise >= 0.0)) {
            throw ValidationError("channel process needs finite base/drift and noise >= 0");
        }
    };
    check(sc.defaults);
    for (const auto& o : sc.overrides) {
        if (!known_channels.contains(o.channel)) {
            throw ValidationError("scenario override names unknown channel '" + o.channel + "'");
        }
        if (o.org != "*" && !ids.contains(o.org)) {
            throw ValidationError("scenario override names unknown organisation '" + o.org + "'");
        }
        check(o.process);
    }
}

// One snapshot per organisation (company first) at time j. A pure function of
// (scenario, j): every channel value draws from its own seeded stream.
inline std::vector<ScanSnapshot> simulate_scan(const Scenario& sc, std::int64_t j) {
    validate(sc);
    std::vector<ScanSnapshot> out;
    const auto orgs = sc.organisations();
    for (std::size_t o = 0; o < orgs.size(); ++o) {
        ScanSnapshot s;
        s.org = orgs[o];
        s.t = j;
        std::uint64_t channel = 0;
        auto stream = [&] {
            std::uint64_t h = detail::splitmix(sc.seed);
            h = detail::splitmix(h ^ static_cast<std::uint64_t>(o));
            h = detail::splitmix(h ^ channel++);
            return detail::splitmix(h ^ static_cast<std::uint64_t>(j));
        };
        for (const auto& [id, levels] : sc.attack_types) {
            std::vector<double> v(levels);
            for (std::size_t l = 0; l < levels; ++l) {
                v[l] = detail::draw(detail::resolve(sc, s.org, "attacks." + id, l), j, stream());
            }
            s.attacks[id] = std::move(v);
        }
        s.env.resize(sc.env_size);
        for (std::size_t i = 0; i < sc.env_size; ++i) {
            s.env[i] = detail::draw(detail::resolve(sc, s.org, "env", i), j, stream());
        }
        s.posture.resize(sc.posture_size);
        for (std::size_t i = 0; i < sc.posture_size; ++i) {
            s.posture[i] = detail::draw(detail::resolve(sc, s.org, "posture", i), j, stream());
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace sccr::pipeline
