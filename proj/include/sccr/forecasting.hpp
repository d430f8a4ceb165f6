#pragma once

// Second-order polynomial (local linear trend) dynamic linear model per risk
// indicator: Kalman filtering, k-step forecasting, predictive intervals and
// monitoring alarms.
//
//   theta_j | theta_{j-1} ~ N(G theta_{j-1}, W),   X_j | theta_j ~ N(F' theta_j, V)
//   F = [1, 0]',  G = [[1, 1], [0, 1]]

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sccr/errors.hpp"
#include "sccr/special_functions.hpp"

namespace sccr::dlm {

using Vec2 = std::array<double, 2>;
using Mat2 = std::array<std::array<double, 2>, 2>;

inline constexpr Vec2 kObservation{1.0, 0.0};
inline constexpr Mat2 kTransition{{{1.0, 1.0}, {0.0, 1.0}}};

namespace detail {

inline Vec2 apply(const Mat2& a, const Vec2& x) {
    return {a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]};
}

// G C G'
inline Mat2 propagate(const Mat2& c) {
    const double c00 = c[0][0] + c[0][1] + c[1][0] + c[1][1];
    const double c01 = c[0][1] + c[1][1];
    const double c10 = c[1][0] + c[1][1];
    return {{{c00, c01}, {c10, c[1][1]}}};
}

inline Mat2 add(const Mat2& a, const Mat2& b) {
    return {{{a[0][0] + b[0][0], a[0][1] + b[0][1]}, {a[1][0] + b[1][0], a[1][1] + b[1][1]}}};
}

inline Mat2 scaled(const Mat2& a, double s) {
    return {{{a[0][0] * s, a[0][1] * s}, {a[1][0] * s, a[1][1] * s}}};
}

inline Mat2 symmetrized(const Mat2& a) {
    const double off = 0.5 * (a[0][1] + a[1][0]);
    return {{{a[0][0], off}, {off, a[1][1]}}};
}

}  // namespace detail

enum class VarianceMode { known, estimated };

struct DlmState {
    Vec2 m{0.0, 0.0};
    Mat2 C{{{0.0, 0.0}, {0.0, 0.0}}};
    double V = 1.0;  // observation variance (current estimate in estimated mode)
    Mat2 W{{{0.0, 0.0}, {0.0, 0.0}}};
    // When set, W_j = (1 - d) / d * G C_{j-1} G' and the explicit W is ignored.
    std::optional<double> discount;
    VarianceMode variance_mode = VarianceMode::known;
    double variance_floor = 1e-8;
    double variance_dof = 1.0;  // observations behind the estimated V
    std::int64_t t = 0;

    bool operator==(const DlmState&) const = default;
};

struct DlmConfig {
    double discount = 0.95;
    double variance_floor = 1e-8;
    std::optional<double> observation_variance;  // fixed V; estimated when absent
};

struct Forecast {
    int horizon = 1;
    std::int64_t time = 0;
    double mean = 0.0;
    double variance = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    double alpha = 0.05;
};

enum class AlarmKind { breach_high, breach_low, horizon_threshold };

inline const char* to_string(AlarmKind k) {
    switch (k) {
        case AlarmKind::breach_high: return "breach_high";
        case AlarmKind::breach_low: return "breach_low";
        case AlarmKind::horizon_threshold: return "horizon_threshold";
    }
    return "unknown";
}

inline AlarmKind alarm_kind_from_string(const std::string& s) {
    if (s == "breach_high") return AlarmKind::breach_high;
    if (s == "breach_low") return AlarmKind::breach_low;
    if (s == "horizon_threshold") return AlarmKind::horizon_threshold;
    throw ValidationError("unknown alarm kind '" + s + "'");
}

struct AlarmEvent {
    AlarmKind kind = AlarmKind::breach_high;
    std::string indicator;
    std::int64_t time = 0;
    double value = 0.0;  // observation for breaches, forecast mean for horizon alarms
    double lower = 0.0;
    double upper = 0.0;
    double threshold = 0.0;
    double probability = 0.0;
    int horizon = 0;
    int repeat_count = 1;
};

// Consecutive-breach bookkeeping for one indicator.
struct BreachHistory {
    std::optional<AlarmKind> last_kind;
    int count = 0;

    bool operator==(const BreachHistory&) const = default;
};

inline void validate(const DlmState& s) {
    if (!std::isfinite(s.m[0]) || !std::isfinite(s.m[1])) throw ValidationError("non-finite DLM mean");
    if (!(s.V >= 0.0)) throw ValidationError("observation variance must be >= 0");
    if (s.discount && !(*s.discount > 0.0 && *s.discount <= 1.0)) {
        throw ValidationError("discount factor must lie in (0,1]");
    }
    if (!(s.C[0][0] >= 0.0) || !(s.C[1][1] >= 0.0)) {
        throw ValidationError("state covariance must be positive semidefinite");
    }
}

inline DlmState initialize(double first_observation, std::int64_t t, const DlmConfig& cfg) {
    if (!std::isfinite(first_observation)) throw ValidationError("non-finite observation");
    if (!(cfg.discount > 0.0 && cfg.discount <= 1.0)) {
        throw ValidationError("discount factor must lie in (0,1]");
    }
    DlmState s;
    s.V = cfg.observation_variance
              ? *cfg.observation_variance
              : std::max(cfg.variance_floor, 0.01 * first_observation * first_observation);
    s.variance_mode = cfg.observation_variance ? VarianceMode::known : VarianceMode::estimated;
    s.variance_floor = cfg.variance_floor;
    s.discount = cfg.discount;
    s.m = {first_observation, 0.0};
    s.C = {{{10.0 * s.V, 0.0}, {0.0, s.V}}};
    s.t = t;
    return s;
}

// Evolution covariance used when stepping from the current posterior.
inline Mat2 evolution_covariance(const DlmState& s) {
    if (s.discount) {
        const double d = *s.discount;
        return detail::scaled(detail::propagate(s.C), (1.0 - d) / d);
    }
    return s.W;
}

// One-step predictive distribution of the next observation.
inline Forecast one_step(const DlmState& s, double alpha = 0.05) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0,1)");
    const Vec2 a = detail::apply(kTransition, s.m);
    const Mat2 r = detail::add(detail::propagate(s.C), evolution_covariance(s));
    Forecast f;
    f.horizon = 1;
    f.time = s.t + 1;
    f.mean = a[0];
    f.variance = r[0][0] + s.V;
    const double z = special::normal_quantile(1.0 - alpha / 2.0);
    const double half = z * std::sqrt(std::max(0.0, f.variance));
    f.lower = f.mean - half;
    f.upper = f.mean + half;
    f.alpha = alpha;
    return f;
}

// West-Harrison updating recursions. In estimated-variance mode V follows the
// conjugate running estimate S_j = S_{j-1} + S_{j-1}/n_j (e^2/Q - 1), floored,
// and the posterior covariance is rescaled by S_j / S_{j-1}.
inline DlmState filter_step(const DlmState& s, double x) {
    if (!std::isfinite(x)) throw ValidationError("non-finite observation");
    const Vec2 a = detail::apply(kTransition, s.m);
    const Mat2 r = detail::add(detail::propagate(s.C), evolution_covariance(s));
    const double f = a[0];
    const double q = r[0][0] + s.V;
    const double e = x - f;
    if (!std::isfinite(q) || q < 0.0) throw NumericalError("one-step forecast variance is invalid");

    DlmState out = s;
    out.t = s.t + 1;
    if (q == 0.0) {
        // Noiseless model: the observation must equal the forecast exactly.
        if (e != 0.0) throw NumericalError("observation contradicts a zero-variance forecast");
        out.m = a;
        out.C = detail::symmetrized(r);
        return out;
    }
    const Vec2 gain{r[0][0] / q, r[1][0] / q};
    out.m = {a[0] + gain[0] * e, a[1] + gain[1] * e};
    Mat2 c{{{r[0][0] - gain[0] * gain[0] * q, r[0][1] - gain[0] * gain[1] * q},
            {r[1][0] - gain[1] * gain[0] * q, r[1][1] - gain[1] * gain[1] * q}}};
    if (s.variance_mode == VarianceMode::estimated) {
        const double dof = s.variance_dof + 1.0;
        const double prev = std::max(s.V, s.variance_floor);
        double next = prev + prev / dof * (e * e / q - 1.0);
        next = std::max(next, s.variance_floor);
        c = detail::scaled(c, next / prev);
        out.V = next;
        out.variance_dof = dof;
    }
    out.C = detail::symmetrized(c);
    return out;
}

// k-step forecasts from the current posterior. In discount mode the evolution
// covariance at the forecast origin is held fixed over the horizon.
inline std::vector<Forecast> forecast(const DlmState& s, int steps, double alpha = 0.05) {
    if (steps < 1) throw ValidationError("forecast horizon must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0,1)");
    const double z = special::normal_quantile(1.0 - alpha / 2.0);
    const Mat2 w = evolution_covariance(s);
    Vec2 a = s.m;
    Mat2 r = s.C;
    std::vector<Forecast> out;
    out.reserve(static_cast<std::size_t>(steps));
    for (int k = 1; k <= steps; ++k) {
        a = detail::apply(kTransition, a);
        r = detail::add(detail::propagate(r), w);
        Forecast f;
        f.horizon = k;
        f.time = s.t + k;
        f.mean = a[0];
        f.variance = r[0][0] + s.V;
        const double half = z * std::sqrt(std::max(0.0, f.variance));
        f.lower = f.mean - half;
        f.upper = f.mean + half;
        f.alpha = alpha;
        out.push_back(f);
    }
    return out;
}

// Interval breach of observation x against the forecast made for the same time.
// Updates `history`; consecutive breaches of the same direction escalate the
// repeat count, anything else resets it.
inline std::optional<AlarmEvent> breach_alarm(const Forecast& fc, double x, BreachHistory& history,
                                              const std::string& indicator = {}) {
    std::optional<AlarmKind> kind;
    if (x > fc.upper) {
        kind = AlarmKind::breach_high;
    } else if (x < fc.lower) {
        kind = AlarmKind::breach_low;
    }
    if (!kind) {
        history = {};
        return std::nullopt;
    }
    history.count = history.last_kind == kind ? history.count + 1 : 1;
    history.last_kind = kind;
    AlarmEvent ev;
    ev.kind = *kind;
    ev.indicator = indicator;
    ev.time = fc.time;
    ev.value = x;
    ev.lower = fc.lower;
    ev.upper = fc.upper;
    ev.horizon = fc.horizon;
    ev.repeat_count = history.count;
    return ev;
}

// Pr(X_{t+k} >= y) under the k-step predictive normal.
inline double exceedance_probability(const Forecast& f, double y) {
    if (f.variance <= 0.0) return f.mean >= y ? 1.0 : 0.0;
    return 1.0 - special::normal_cdf((y - f.mean) / std::sqrt(f.variance));
}

// Alarm at the first horizon k <= max_steps whose exceedance probability of
// `threshold` reaches `min_probability`.
inline std::optional<AlarmEvent> horizon_alarm(const DlmState& s, double threshold, int max_steps,
                                               double min_probability,
                                               const std::string& indicator = {},
                                               double alpha = 0.05) {
    if (max_steps < 1) return std::nullopt;
    for (const auto& f : forecast(s, max_steps, alpha)) {
        const double p = exceedance_probability(f, threshold);
        if (p >= min_probability) {
            AlarmEvent ev;
            ev.kind = AlarmKind::horizon_threshold;
            ev.indicator = indicator;
            ev.time = f.time;
            ev.value = f.mean;
            ev.lower = f.lower;
            ev.upper = f.upper;
            ev.threshold = threshold;
            ev.probability = p;
            ev.horizon = f.horizon;
            ev.repeat_count = 1;
            return ev;
        }
    }
    return std::nullopt;
}

}  // namespace sccr::dlm
