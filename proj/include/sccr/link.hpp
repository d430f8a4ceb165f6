#pragma once

// The probability link used by attack models. Evaluation and inversion are the
// only two entry points, so an alternate invertible link can replace this one
// without touching elicitation or attack_model code.

#include <cmath>
#include <string>

#include "sccr/errors.hpp"

namespace sccr {

struct LogisticLink {
    // g(x) = 1 / (1 + exp(-x)), evaluated without overflow for large |x|.
    static double evaluate(double x) noexcept {
        if (x >= 0.0) {
            return 1.0 / (1.0 + std::exp(-x));
        }
        const double e = std::exp(x);
        return e / (1.0 + e);
    }

    // g^{-1}(p) = log(p / (1 - p)). Probabilities of exactly 0 or 1 cannot be
    // mapped back to a finite coefficient and signal a re-elicitation need.
    static double invert(double p) {
        if (!(p > 0.0 && p < 1.0)) {
            throw DomainError("probability " + std::to_string(p) +
                              " must lie strictly inside (0,1); re-elicit this judgment");
        }
        return std::log(p) - std::log1p(-p);
    }
};

inline double logistic(double x) noexcept { return LogisticLink::evaluate(x); }
inline double logit(double p) { return LogisticLink::invert(p); }

}  // namespace sccr
