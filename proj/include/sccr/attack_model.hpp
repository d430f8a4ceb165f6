#pragma once

// Per-attack-type success probabilities from the extended feature vector
// [severity counts, posture index, environment index] through the logistic link.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sccr/errors.hpp"
#include "sccr/link.hpp"

namespace sccr {

// Coefficients on the posture and environment indices, shared by all attack types.
struct IndexCoefficients {
    double posture = 0.0;
    double environment = 0.0;
};

struct IndexWeights {
    std::vector<double> environment{1.0};
    std::vector<double> posture{1.0};
};

struct AttackVectorModel {
    std::string attack_id;
    double intercept = 0.0;
    std::vector<double> severity;  // one coefficient per severity level
    double transfer_probability = 0.0;

    std::size_t levels() const noexcept { return severity.size(); }
};

struct FeatureVector {
    std::vector<double> severity;  // smoothed counts, percentage-of-fleet points
    double posture = 0.0;          // in [0,1]
    double environment = 0.0;      // in [0,1]
};

// Everything the engine needs to turn a scan into per-type probabilities.
struct AttackModelSet {
    std::vector<AttackVectorModel> attacks;
    IndexCoefficients index;
    IndexWeights weights;

    const AttackVectorModel* find(const std::string& id) const {
        for (const auto& a : attacks) {
            if (a.attack_id == id) return &a;
        }
        return nullptr;
    }
};

inline void validate(const AttackVectorModel& m) {
    if (m.severity.empty()) {
        throw ValidationError("attack type " + m.attack_id + " needs at least one severity level");
    }
    if (!(m.transfer_probability >= 0.0 && m.transfer_probability <= 1.0)) {
        throw ValidationError("transfer probability of " + m.attack_id + " must lie in [0,1]");
    }
    if (!std::isfinite(m.intercept)) throw ValidationError("non-finite intercept in " + m.attack_id);
    for (double b : m.severity) {
        if (!std::isfinite(b)) throw ValidationError("non-finite coefficient in " + m.attack_id);
    }
}

inline void validate_index_weights(std::span<const double> w, const std::string& what) {
    if (w.empty()) throw ValidationError(what + " weights are empty");
    double total = 0.0;
    for (double v : w) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError(what + " weights must be >= 0");
        total += v;
    }
    if (std::fabs(total - 1.0) > 1e-9) throw ValidationError(what + " weights must sum to 1");
}

inline void validate(const AttackModelSet& set) {
    if (set.attacks.empty()) throw ValidationError("model defines no attack types");
    for (std::size_t i = 0; i < set.attacks.size(); ++i) {
        validate(set.attacks[i]);
        for (std::size_t j = 0; j < i; ++j) {
            if (set.attacks[j].attack_id == set.attacks[i].attack_id) {
                throw ValidationError("duplicate attack type " + set.attacks[i].attack_id);
            }
        }
    }
    if (!std::isfinite(set.index.posture) || !std::isfinite(set.index.environment)) {
        throw ValidationError("non-finite index coefficient");
    }
    validate_index_weights(set.weights.environment, "environment");
    validate_index_weights(set.weights.posture, "posture");
}

// Linear value function sum_i w_i x_i.
inline double weighted_index(std::span<const double> values, std::span<const double> weights) {
    if (values.size() != weights.size()) {
        throw ValidationError("index has " + std::to_string(values.size()) + " variables but " +
                              std::to_string(weights.size()) + " weights");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) s += weights[i] * values[i];
    return s;
}

inline double environment_index(std::span<const double> env, std::span<const double> lambda) {
    return weighted_index(env, lambda);
}

inline double posture_index(std::span<const double> posture, std::span<const double> v) {
    return weighted_index(posture, v);
}

inline double linear_predictor(const AttackVectorModel& model, const IndexCoefficients& index,
                               const FeatureVector& features) {
    if (features.severity.size() != model.levels()) {
        throw ValidationError("attack type " + model.attack_id + " expects " +
                              std::to_string(model.levels()) + " severity levels, got " +
                              std::to_string(features.severity.size()));
    }
    double eta = model.intercept;
    for (std::size_t i = 0; i < model.severity.size(); ++i) {
        eta += model.severity[i] * features.severity[i];
    }
    eta += index.posture * features.posture + index.environment * features.environment;
    return eta;
}

inline double attack_probability(const AttackVectorModel& model, const IndexCoefficients& index,
                                 const FeatureVector& features) {
    return LogisticLink::evaluate(linear_predictor(model, index, features));
}

}  // namespace sccr
