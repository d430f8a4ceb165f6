#pragma once

// Structured expert judgment: classical-model calibration of experts, linear
// opinion pooling, and inversion of elicited probabilities and tradeoffs into
// logistic coefficients and index weights.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sccr/errors.hpp"
#include "sccr/link.hpp"
#include "sccr/special_functions.hpp"

namespace sccr::elicitation {

struct SeedQuestion {
    std::string id;
    double realization = 0.0;
    std::vector<double> quantile_probs{0.05, 0.50, 0.95};
    double background_low = 0.0;
    double background_high = 1.0;
};

struct ExpertAnswerSet {
    std::string expert_id;
    std::map<std::string, std::vector<double>> seed_quantiles;  // question id -> quantiles
    std::map<std::string, double> model_answers;                // question id -> probability
};

struct ExpertWeights {
    std::map<std::string, double> weights;
    std::map<std::string, double> calibration;
    std::map<std::string, double> information;
};

struct CookeOptions {
    // Experts with calibration strictly below the cutoff get weight zero.
    double calibration_cutoff = 0.0;
    // Fraction of the question range added on each side for the information score.
    double overshoot = 0.10;
};

struct TradeoffJudgment {
    int variable_index = 1;  // judgment delta1 * w[i] = delta2 * w[i+1], 1-based
    double delta1 = 1.0;
    double delta2 = 1.0;
};

struct ConsistencyReport {
    std::string check_id;
    double implied_value = 0.0;   // logit implied by the recovered coefficients
    double elicited_value = 0.0;  // logit of the elicited probability
    double implied_probability = 0.0;
    double elicited_probability = 0.0;
    double discrepancy = 0.0;  // elicited_value - implied_value
    double tolerance = 0.5;
    bool pass = true;
};

inline constexpr double kDefaultConsistencyTolerance = 0.5;

namespace detail {

inline void require_strictly_increasing(std::span<const double> values, const std::string& what) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) throw ValidationError(what + " contains a non-finite value");
        if (i > 0 && !(values[i] > values[i - 1])) {
            throw ValidationError(what + " must be strictly increasing");
        }
    }
}

inline std::vector<double> bin_proportions(std::span<const double> probs) {
    std::vector<double> out;
    out.reserve(probs.size() + 1);
    double prev = 0.0;
    for (double p : probs) {
        out.push_back(p - prev);
        prev = p;
    }
    out.push_back(1.0 - prev);
    return out;
}

inline void validate_seed(const SeedQuestion& q) {
    if (q.quantile_probs.empty()) throw ValidationError("seed question " + q.id + " has no quantiles");
    require_strictly_increasing(q.quantile_probs, "quantile_probs of seed question " + q.id);
    if (!(q.quantile_probs.front() > 0.0 && q.quantile_probs.back() < 1.0)) {
        throw ValidationError("quantile_probs of seed question " + q.id + " must lie in (0,1)");
    }
    if (!(q.background_low < q.background_high)) {
        throw ValidationError("background_range of seed question " + q.id + " must have low < high");
    }
    if (!(q.realization >= q.background_low && q.realization <= q.background_high)) {
        throw ValidationError("background_range of seed question " + q.id +
                              " must contain the realization");
    }
}

}  // namespace detail

// Classical-model weights. Calibration is the chi-square tail probability of
// 2N * I(s; p), with s the empirical inter-quantile hit frequencies and p the
// expected ones; information is the mean relative entropy of the expert's
// piecewise-uniform density against the uniform density on the overshoot range.
inline ExpertWeights cooke_scores(std::span<const SeedQuestion> seeds,
                                  std::span<const ExpertAnswerSet> experts,
                                  const CookeOptions& options = {}) {
    if (seeds.empty()) throw ValidationError("at least one seed question is required");
    if (experts.empty()) throw ValidationError("at least one expert is required");
    if (!(options.overshoot >= 0.0)) throw ValidationError("overshoot must be non-negative");

    // Process questions in id order so results do not depend on input order.
    std::map<std::string, const SeedQuestion*> by_id;
    for (const auto& q : seeds) {
        detail::validate_seed(q);
        if (!by_id.emplace(q.id, &q).second) throw ValidationError("duplicate seed question " + q.id);
    }
    const auto& probs = by_id.begin()->second->quantile_probs;
    for (const auto& [id, q] : by_id) {
        if (q->quantile_probs != probs) {
            throw ValidationError("all seed questions must share one quantile set");
        }
    }
    const std::vector<double> expected = detail::bin_proportions(probs);
    const std::size_t bins = expected.size();

    std::map<std::string, const ExpertAnswerSet*> panel;
    for (const auto& e : experts) {
        if (!panel.emplace(e.expert_id, &e).second) {
            throw ValidationError("duplicate expert " + e.expert_id);
        }
        for (const auto& [id, q] : by_id) {
            auto it = e.seed_quantiles.find(id);
            if (it == e.seed_quantiles.end()) {
                throw ValidationError("expert " + e.expert_id + " did not answer seed question " + id);
            }
            if (it->second.size() != probs.size()) {
                throw ValidationError("expert " + e.expert_id + " gave " +
                                      std::to_string(it->second.size()) + " quantiles for " + id);
            }
            detail::require_strictly_increasing(it->second,
                                                "quantiles of expert " + e.expert_id + " for " + id);
        }
    }

    // Intrinsic range per question: background range widened to cover every
    // expert quantile, then extended by the overshoot on each side.
    std::map<std::string, std::pair<double, double>> ranges;
    for (const auto& [id, q] : by_id) {
        double lo = q->background_low;
        double hi = q->background_high;
        for (const auto& [eid, e] : panel) {
            const auto& qs = e->seed_quantiles.at(id);
            lo = std::min(lo, qs.front());
            hi = std::max(hi, qs.back());
        }
        const double pad = options.overshoot * (hi - lo);
        ranges[id] = {lo - pad, hi + pad};
    }

    ExpertWeights out;
    const double n = static_cast<double>(by_id.size());
    for (const auto& [eid, e] : panel) {
        std::vector<double> hits(bins, 0.0);
        double info_sum = 0.0;
        for (const auto& [id, q] : by_id) {
            const auto& qs = e->seed_quantiles.at(id);
            const auto bin = static_cast<std::size_t>(
                std::count_if(qs.begin(), qs.end(), [&](double v) { return v < q->realization; }));
            hits[bin] += 1.0;

            const auto [lo, hi] = ranges.at(id);
            double prev = lo;
            double info = 0.0;
            for (std::size_t i = 0; i < bins; ++i) {
                const double edge = i < qs.size() ? qs[i] : hi;
                const double width_fraction = (edge - prev) / (hi - lo);
                info += expected[i] * std::log(expected[i] / width_fraction);
                prev = edge;
            }
            info_sum += info;
        }
        double relative_entropy = 0.0;
        for (std::size_t i = 0; i < bins; ++i) {
            const double s = hits[i] / n;
            if (s > 0.0) relative_entropy += s * std::log(s / expected[i]);
        }
        const double calibration =
            special::chi_square_survival(2.0 * n * relative_entropy, static_cast<double>(bins - 1));
        const double information = info_sum / n;
        out.calibration[eid] = calibration;
        out.information[eid] = information;
        out.weights[eid] = calibration < options.calibration_cutoff ? 0.0 : calibration * information;
    }

    double total = 0.0;
    for (const auto& [eid, w] : out.weights) total += w;
    if (!(total > 0.0)) throw ValidationError("no calibrated expert");
    for (auto& [eid, w] : out.weights) w /= total;
    return out;
}

// Linear opinion pool p = sum_i w_i p_i.
inline double aggregate_probability(const ExpertWeights& weights,
                                    const std::map<std::string, double>& probs) {
    double p = 0.0;
    for (const auto& [eid, w] : weights.weights) {
        if (w == 0.0) continue;
        auto it = probs.find(eid);
        if (it == probs.end()) throw ValidationError("missing probability for expert " + eid);
        if (!(it->second > 0.0 && it->second < 1.0)) {
            throw ValidationError("probability of expert " + eid + " must lie in (0,1)");
        }
        p += w * it->second;
    }
    return p;
}

inline double invert_intercept(double p0) { return logit(p0); }

// Solves logit(p) = sum_j coefficients[j] * probe[j] for coefficients[index],
// treating every other coefficient as already known. By convention probe[0] = 1
// multiplies the intercept coefficients[0]. The current value of
// coefficients[index] is ignored.
inline double invert_level_coefficient(double p, std::span<const double> coefficients,
                                       std::span<const double> probe, std::size_t index) {
    if (coefficients.size() != probe.size()) {
        throw ValidationError("coefficient and probe vectors differ in length");
    }
    if (index >= probe.size()) throw ValidationError("coefficient index out of range");
    if (probe[index] == 0.0) {
        throw DomainError("probe has zero weight on coefficient " + std::to_string(index) +
                          "; coefficient is unidentifiable");
    }
    double known = 0.0;
    for (std::size_t j = 0; j < probe.size(); ++j) {
        if (j != index) known += coefficients[j] * probe[j];
    }
    return (logit(p) - known) / probe[index];
}

inline ConsistencyReport consistency_check(std::string check_id, std::span<const double> probe,
                                           double elicited, std::span<const double> coefficients,
                                           double tolerance_logit = kDefaultConsistencyTolerance) {
    if (coefficients.size() != probe.size()) {
        throw ValidationError("coefficient and probe vectors differ in length");
    }
    if (!(tolerance_logit >= 0.0)) throw ValidationError("consistency tolerance must be >= 0");
    ConsistencyReport r;
    r.check_id = std::move(check_id);
    r.elicited_probability = elicited;
    r.elicited_value = logit(elicited);
    double implied = 0.0;
    for (std::size_t j = 0; j < probe.size(); ++j) implied += coefficients[j] * probe[j];
    r.implied_value = implied;
    r.implied_probability = logistic(implied);
    r.discrepancy = r.elicited_value - r.implied_value;
    r.tolerance = tolerance_logit;
    r.pass = std::fabs(r.discrepancy) <= tolerance_logit;
    return r;
}

// Weights w (summing to one) satisfying delta1_i * w_i = delta2_i * w_{i+1}
// for i = 1..k-1. Serves both environment and posture indices.
inline std::vector<double> solve_tradeoff_weights(std::span<const TradeoffJudgment> judgments,
                                                  std::size_t k) {
    if (k == 0) throw ValidationError("at least one variable is required");
    if (judgments.size() != k - 1) {
        throw ValidationError("expected " + std::to_string(k - 1) + " tradeoff judgments, got " +
                              std::to_string(judgments.size()));
    }
    std::vector<double> ratio(k - 1, std::numeric_limits<double>::quiet_NaN());
    for (const auto& j : judgments) {
        if (j.variable_index < 1 || static_cast<std::size_t>(j.variable_index) > k - 1) {
            throw ValidationError("tradeoff judgment index " + std::to_string(j.variable_index) +
                                  " out of range 1.." + std::to_string(k - 1));
        }
        if (!(j.delta1 > 0.0) || !(j.delta2 > 0.0) || !std::isfinite(j.delta1) ||
            !std::isfinite(j.delta2)) {
            throw ValidationError("tradeoff deltas must be positive and finite");
        }
        auto& slot = ratio[static_cast<std::size_t>(j.variable_index - 1)];
        if (!std::isnan(slot)) {
            throw ValidationError("duplicate tradeoff judgment for index " +
                                  std::to_string(j.variable_index));
        }
        slot = j.delta1 / j.delta2;
    }
    // w_1 (1 + sum_i prod_{j<=i} r_j) = 1
    std::vector<double> w(k, 1.0);
    for (std::size_t i = 1; i < k; ++i) w[i] = w[i - 1] * ratio[i - 1];
    double total = 0.0;
    for (double v : w) total += v;
    const double first = 1.0 / total;
    w[0] = first;
    for (std::size_t i = 1; i < k; ++i) w[i] = w[i - 1] * ratio[i - 1];
    return w;
}

}  // namespace sccr::elicitation
