#pragma once

// Headline risk outputs for a company and its suppliers:
//   AP   direct attack probability
//   IAP  attack probability induced by one supplier
//   GAP  global attack probability
//   R, IR, TR  expected impacts (direct, induced per supplier, total)
// plus Monte Carlo expected-utility analogues of R, IR and TR.
//
// Every combination sum runs over attack sets I with 1 <= |I| <= K and weights
// each set by its exact-outcome probability prod_{a in I} p_a prod_{a not in I} (1 - p_a).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sccr/errors.hpp"
#include "sccr/impact_model.hpp"

namespace sccr {

// Sums over capped attack sets: `any` = sum_I P(I), `transferred` = sum_I P(I) T(I)
// with T(I) = 1 - prod_{a in I} (1 - q_a).
struct CappedSums {
    double any = 0.0;
    double transferred = 0.0;
};

// Exact enumeration is used up to this many attack types.
inline constexpr std::size_t kMaxEnumeratedTypes = 25;

namespace detail {

inline void validate_probabilities(std::span<const double> p, const char* what) {
    for (double v : p) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw ValidationError(std::string(what) + " must lie in [0,1]");
        }
    }
}

inline void validate_cap(std::size_t cap, std::size_t n, const char* what) {
    if (cap < 1 || cap > n) {
        throw ValidationError(std::string(what) + " cap " + std::to_string(cap) +
                              " outside 1.." + std::to_string(n));
    }
}

struct Enumerator {
    std::span<const double> p;
    std::span<const double> q;
    std::size_t cap;
    std::vector<double> suffix_none;  // prod_{j >= i} (1 - p_j)
    CappedSums sums;

    void run(std::size_t i, std::size_t count, double prob, double not_transferred) {
        if (count == cap || i == p.size()) {
            if (count == 0) return;
            const double exact = prob * suffix_none[i];
            sums.any += exact;
            sums.transferred += exact * (1.0 - not_transferred);
            return;
        }
        const double keep = q.empty() ? 1.0 : 1.0 - q[i];
        run(i + 1, count + 1, prob * p[i], not_transferred * keep);
        run(i + 1, count, prob * (1.0 - p[i]), not_transferred);
    }
};

// Estimator for more types than can be enumerated with a cap below |A|.
inline CappedSums sampled_sums(std::span<const double> p, std::span<const double> q,
                               std::size_t cap) {
    constexpr std::size_t draws = 1'000'000;
    std::mt19937_64 rng(0x5cc2a991u);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    CappedSums s;
    for (std::size_t d = 0; d < draws; ++d) {
        std::size_t count = 0;
        double not_transferred = 1.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (u(rng) < p[i]) {
                ++count;
                if (!q.empty()) not_transferred *= 1.0 - q[i];
            }
        }
        if (count >= 1 && count <= cap) {
            s.any += 1.0;
            s.transferred += 1.0 - not_transferred;
        }
    }
    s.any /= static_cast<double>(draws);
    s.transferred /= static_cast<double>(draws);
    return s;
}

}  // namespace detail

// `q` may be empty, in which case `transferred` is reported as zero.
inline CappedSums capped_sums(std::span<const double> p, std::span<const double> q,
                              std::size_t cap) {
    detail::validate_probabilities(p, "attack probabilities");
    detail::validate_probabilities(q, "transfer probabilities");
    if (!q.empty() && q.size() != p.size()) {
        throw ValidationError("attack and transfer probability vectors differ in length");
    }
    if (p.empty()) throw ValidationError("at least one attack type is required");
    detail::validate_cap(cap, p.size(), "attack");

    if (p.size() <= kMaxEnumeratedTypes) {
        detail::Enumerator e{p, q, cap, std::vector<double>(p.size() + 1, 1.0), {}};
        for (std::size_t i = p.size(); i-- > 0;) e.suffix_none[i] = e.suffix_none[i + 1] * (1.0 - p[i]);
        e.run(0, 0, 1.0, 1.0);
        if (q.empty()) e.sums.transferred = 0.0;
        return e.sums;
    }
    if (cap == p.size()) {
        double none = 1.0;
        double none_transferred = 1.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            none *= 1.0 - p[i];
            if (!q.empty()) none_transferred *= 1.0 - p[i] * q[i];
        }
        return {1.0 - none, q.empty() ? 0.0 : 1.0 - none_transferred};
    }
    return detail::sampled_sums(p, q, cap);
}

inline double direct_attack_probability(std::span<const double> p, std::size_t cap) {
    return capped_sums(p, {}, cap).any;
}

inline double induced_attack_probability(std::span<const double> p_supplier,
                                         std::span<const double> q, std::size_t cap) {
    if (q.size() != p_supplier.size()) {
        throw ValidationError("attack and transfer probability vectors differ in length");
    }
    return capped_sums(p_supplier, q, cap).transferred;
}

// A direct attack supersedes induced ones, so the supplier term only counts when
// no direct attack happens.
inline double global_attack_probability(double ap, std::span<const double> iaps,
                                        std::size_t supplier_cap) {
    if (!(ap >= 0.0 && ap <= 1.0)) throw ValidationError("AP must lie in [0,1]");
    if (iaps.empty()) return ap;
    const double induced = capped_sums(iaps, {}, supplier_cap).any;
    return ap + (1.0 - ap) * induced;
}

// R = AP * (c_d + c_{i_c}): a direct attack costs reputation plus company
// downtime. The product form AP * (c_d x c_{i_s}) is not used; it has units of
// EUR^2 and charges the supplier's downtime for an attack on the company.
inline double direct_risk(double ap, double reputation_cost, double company_downtime_cost) {
    if (!(reputation_cost >= 0.0) || !(company_downtime_cost >= 0.0)) {
        throw ValidationError("costs must be non-negative");
    }
    return ap * (reputation_cost + company_downtime_cost);
}

// IR = sum_I P(I) [ (1 - T(I)) c_{i_s} + T(I) (c_d + c_{i_c} + c_{i_s}) ].
// Untransferred attacks cost only the supplier downtime; transferred ones add
// the direct-attack cost. T(I) is the probability that at least one attack in I
// transfers; the factor 1 - (1 - prod(1 - q)) = prod(1 - q) is the probability
// that none does and belongs to the untransferred branch.
inline double induced_risk(std::span<const double> p_supplier, std::span<const double> q,
                           double supplier_downtime_cost, double reputation_cost,
                           double company_downtime_cost, std::size_t cap) {
    if (!(supplier_downtime_cost >= 0.0) || !(reputation_cost >= 0.0) ||
        !(company_downtime_cost >= 0.0)) {
        throw ValidationError("costs must be non-negative");
    }
    if (q.size() != p_supplier.size()) {
        throw ValidationError("attack and transfer probability vectors differ in length");
    }
    const auto s = capped_sums(p_supplier, q, cap);
    return s.any * supplier_downtime_cost +
           s.transferred * (reputation_cost + company_downtime_cost);
}

inline double total_risk(double direct, std::span<const double> induced) {
    double total = direct;
    for (double ir : induced) total += ir;
    return total;
}

// ---------------------------------------------------------------------------
// Expected utilities

using UtilityRng = std::mt19937_64;
using CostSampler = std::function<double(UtilityRng&)>;

inline CostSampler point_mass(double cost) {
    return [cost](UtilityRng&) { return cost; };
}

// Draws `factor * X` with X from a fitted distribution (e.g. EUR/h times hours).
inline CostSampler scaled_sampler(FittedDistribution dist, double factor) {
    return [dist, factor](UtilityRng& rng) { return factor * sample(dist, rng); };
}

struct SupplierUtilityInput {
    std::string supplier_id;
    CappedSums attack;  // any / transferred mass for this supplier
    CostSampler supplier_downtime;
};

struct UtilityInputs {
    double direct_probability = 0.0;
    CostSampler reputation = point_mass(0.0);
    CostSampler company_downtime = point_mass(0.0);
    std::vector<SupplierUtilityInput> suppliers;
    double risk_aversion = 0.0;
    std::size_t draws = 100'000;
    std::uint64_t seed = 1;
};

struct Estimate {
    double mean = 0.0;
    double standard_error = 0.0;
};

struct UtilityReport {
    Estimate direct;
    std::map<std::string, Estimate> induced;
    Estimate total;
};

inline UtilityReport expected_utility_report(const UtilityInputs& in) {
    if (in.draws < 2) throw ValidationError("at least two Monte Carlo draws are required");
    UtilityRng rng(in.seed);
    const std::size_t ns = in.suppliers.size();
    struct Moments {
        double sum = 0.0;
        double sum_sq = 0.0;
        void add(double x) {
            sum += x;
            sum_sq += x * x;
        }
        Estimate finish(double n) const {
            const double m = sum / n;
            const double var = std::max(0.0, (sum_sq - n * m * m) / (n - 1.0));
            return {m, std::sqrt(var / n)};
        }
    };
    Moments direct;
    Moments total;
    std::vector<Moments> induced(ns);
    for (std::size_t d = 0; d < in.draws; ++d) {
        const double c_direct = in.reputation(rng) + in.company_downtime(rng);
        const double u_direct = in.direct_probability * utility(c_direct, in.risk_aversion);
        direct.add(u_direct);
        double t = u_direct;
        for (std::size_t s = 0; s < ns; ++s) {
            const auto& sup = in.suppliers[s];
            const double c_sup = sup.supplier_downtime(rng);
            const double u = (sup.attack.any - sup.attack.transferred) * utility(c_sup, in.risk_aversion) +
                             sup.attack.transferred * utility(c_direct + c_sup, in.risk_aversion);
            induced[s].add(u);
            t += u;
        }
        total.add(t);
    }
    const double n = static_cast<double>(in.draws);
    UtilityReport r;
    r.direct = direct.finish(n);
    r.total = total.finish(n);
    for (std::size_t s = 0; s < ns; ++s) r.induced[in.suppliers[s].supplier_id] = induced[s].finish(n);
    return r;
}

}  // namespace sccr
