#pragma once

// Impact distributions fitted to elicited quantiles, expected downtimes and
// lost-customer proportions, monetary cost composition and CARA utility.

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "sccr/errors.hpp"
#include "sccr/nelder_mead.hpp"
#include "sccr/special_functions.hpp"

namespace sccr {

enum class Family { gamma, beta };

inline const char* to_string(Family f) { return f == Family::gamma ? "gamma" : "beta"; }

inline Family family_from_string(const std::string& s) {
    if (s == "gamma") return Family::gamma;
    if (s == "beta") return Family::beta;
    throw ValidationError("unknown distribution family '" + s + "'");
}

struct QuantileSpec {
    std::vector<double> probs;
    std::vector<double> values;
};

// Gamma uses (shape, rate); beta uses (a, b).
struct FittedDistribution {
    Family family = Family::gamma;
    double first = 1.0;
    double second = 1.0;
    double fit_residual = 0.0;
};

struct CostModel {
    double company_cost_per_hour = 0.0;
    std::map<std::string, double> supplier_cost_per_hour;
    double market_share = 0.0;
    double market_size = 0.0;
    double risk_aversion = 0.0;  // 1/EUR
};

struct ImpactModel {
    std::string company_id = "company";
    FittedDistribution company_downtime;
    std::map<std::string, FittedDistribution> supplier_downtime;
    FittedDistribution lost_customers{Family::beta, 1.0, 1.0, 0.0};
    CostModel costs;
};

inline void validate(const FittedDistribution& d) {
    if (!(d.first > 0.0) || !(d.second > 0.0) || !std::isfinite(d.first) ||
        !std::isfinite(d.second)) {
        throw ValidationError(std::string(to_string(d.family)) + " parameters must be positive");
    }
}

inline double cdf(const FittedDistribution& d, double x) {
    validate(d);
    if (d.family == Family::gamma) {
        if (!(x >= 0.0)) throw DomainError("gamma cdf evaluated outside [0, inf)");
        return special::gamma_p(d.first, d.second * x);
    }
    if (!(x >= 0.0 && x <= 1.0)) throw DomainError("beta cdf evaluated outside [0, 1]");
    return special::beta_i(d.first, d.second, x);
}

inline double mean(const FittedDistribution& d) {
    validate(d);
    return d.family == Family::gamma ? d.first / d.second : d.first / (d.first + d.second);
}

template <typename Rng>
double sample(const FittedDistribution& d, Rng& rng) {
    if (d.family == Family::gamma) {
        std::gamma_distribution<double> g(d.first, 1.0 / d.second);
        return g(rng);
    }
    std::gamma_distribution<double> ga(d.first, 1.0);
    std::gamma_distribution<double> gb(d.second, 1.0);
    const double x = ga(rng);
    const double y = gb(rng);
    return x / (x + y);
}

inline void validate(Family family, const QuantileSpec& spec) {
    if (spec.probs.size() != spec.values.size()) {
        throw ValidationError("quantile spec has mismatched probs and values");
    }
    if (spec.probs.size() < 2) {
        throw ValidationError("at least two quantiles are needed to fit two parameters");
    }
    for (std::size_t i = 0; i < spec.probs.size(); ++i) {
        const double p = spec.probs[i];
        const double v = spec.values[i];
        if (!(p > 0.0 && p < 1.0)) throw ValidationError("quantile probabilities must lie in (0,1)");
        if (i > 0 && !(p > spec.probs[i - 1])) {
            throw ValidationError("quantile probabilities must be strictly increasing");
        }
        if (i > 0 && !(v > spec.values[i - 1])) {
            throw ValidationError("quantile values must be strictly increasing");
        }
        const bool in_support = family == Family::gamma ? (v > 0.0 && std::isfinite(v))
                                                        : (v > 0.0 && v < 1.0);
        if (!in_support) {
            throw ValidationError(std::string("quantile value outside the support of the ") +
                                  to_string(family) + " family");
        }
    }
}

struct FitOptions {
    optim::NelderMeadOptions simplex{0.5, 1e-10, 2000};
};

// Least-squares quantile matching: minimizes sum_i (p_i - cdf(q_i; theta))^2
// over log-parameters. Eight deterministic starts on a lattice scaled to the
// data; the best terminal point wins.
inline FittedDistribution fit_quantiles(Family family, const QuantileSpec& spec,
                                        const FitOptions& opt = {}) {
    validate(family, spec);

    auto objective = [&](const std::vector<double>& logp) {
        const double a = std::exp(logp[0]);
        const double b = std::exp(logp[1]);
        if (!std::isfinite(a) || !std::isfinite(b) || a <= 0.0 || b <= 0.0 || a > 1e8 || b > 1e8) {
            return 1e10;
        }
        FittedDistribution d{family, a, b, 0.0};
        double s = 0.0;
        try {
            for (std::size_t i = 0; i < spec.probs.size(); ++i) {
                const double r = spec.probs[i] - cdf(d, spec.values[i]);
                s += r * r;
            }
        } catch (const Error&) {
            return 1e10;
        }
        return std::isfinite(s) ? s : 1e10;
    };

    // Log-geometric centre of the elicited values sets the scale of the lattice.
    double log_centre = 0.0;
    for (double v : spec.values) log_centre += std::log(v);
    const double centre = std::exp(log_centre / static_cast<double>(spec.values.size()));

    constexpr std::array<double, 4> shapes{0.5, 1.0, 2.0, 5.0};
    constexpr std::array<double, 2> spreads{0.5, 2.0};
    optim::NelderMeadResult best;
    best.value = std::numeric_limits<double>::infinity();
    bool any_converged = false;
    for (double shape : shapes) {
        for (double spread : spreads) {
            double second;
            if (family == Family::gamma) {
                second = spread * shape / centre;  // rate placing the mean near the centre
            } else {
                second = spread * shape * (1.0 - centre) / centre;  // b placing the mean near it
            }
            auto r = optim::nelder_mead(objective, {std::log(shape), std::log(second)}, opt.simplex);
            any_converged = any_converged || r.converged;
            if (r.value < best.value) best = std::move(r);
        }
    }
    if (!any_converged) {
        throw ConvergenceError("quantile fit did not converge from any start", best.value);
    }
    return FittedDistribution{family, std::exp(best.x[0]), std::exp(best.x[1]), best.value};
}

inline double downtime_cost(double cost_per_hour, double hours) {
    if (!(cost_per_hour >= 0.0) || !(hours >= 0.0)) {
        throw ValidationError("downtime cost inputs must be non-negative");
    }
    return cost_per_hour * hours;
}

inline double reputation_cost(double lost_proportion, double market_share, double market_size) {
    if (!(lost_proportion >= 0.0 && lost_proportion <= 1.0) ||
        !(market_share >= 0.0 && market_share <= 1.0) || !(market_size >= 0.0)) {
        throw ValidationError("reputation cost inputs out of range");
    }
    return lost_proportion * market_share * market_size;
}

// CARA utility u(c) = (1 - exp(-rho c)) / rho, with the rho -> 0 limit u(c) = c.
inline double utility(double cost, double rho) {
    if (std::fabs(rho * cost) < 1e-8) return cost;
    return -std::expm1(-rho * cost) / rho;
}

// Expected monetary costs entering the risk formulas.
struct ExpectedCosts {
    double reputation = 0.0;         // c_d
    double company_downtime = 0.0;   // c_{i_c}
    std::map<std::string, double> supplier_downtime;  // c_{i_s}
};

inline ExpectedCosts expected_costs(const ImpactModel& m) {
    ExpectedCosts c;
    c.reputation = reputation_cost(mean(m.lost_customers), m.costs.market_share, m.costs.market_size);
    c.company_downtime = downtime_cost(m.costs.company_cost_per_hour, mean(m.company_downtime));
    for (const auto& [sid, dist] : m.supplier_downtime) {
        auto it = m.costs.supplier_cost_per_hour.find(sid);
        if (it == m.costs.supplier_cost_per_hour.end()) {
            throw ValidationError("no cost per hour configured for supplier " + sid);
        }
        c.supplier_downtime[sid] = downtime_cost(it->second, mean(dist));
    }
    return c;
}

}  // namespace sccr
