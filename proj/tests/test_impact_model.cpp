#include "catch_amalgamated.hpp"

#include <cmath>
#include <random>
#include <vector>

#include "sccr/impact_model.hpp"
#include "sccr/serialization.hpp"
#include "support/oracles.hpp"

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Quantile of a cdf by bisection on the quadrature oracle.
template <typename Cdf>
double invert(Cdf cdf, double p, double lo, double hi) {
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("fitted cdfs agree with quadrature", "[impact_model]") {
    const sccr::FittedDistribution g{sccr::Family::gamma, 1.79, 0.40, 0.0};
    const sccr::FittedDistribution b{sccr::Family::beta, 0.95, 25.6, 0.0};
    for (double x : {0.3, 2.0, 6.0, 15.0}) {
        CHECK_THAT(sccr::cdf(g, x), WithinAbs(oracle::gamma_cdf_quadrature(1.79, 0.40, x), 1e-12));
    }
    for (double x : {0.001, 0.01, 0.05, 0.2}) {
        CHECK_THAT(sccr::cdf(b, x), WithinAbs(oracle::beta_cdf_quadrature(0.95, 25.6, x), 1e-12));
    }
    CHECK_THROWS_AS(sccr::cdf(g, -1.0), sccr::DomainError);
    CHECK_THROWS_AS(sccr::cdf(b, 1.5), sccr::DomainError);
    CHECK_THAT(sccr::mean(g), WithinRel(1.79 / 0.40, 1e-15));
    CHECK_THAT(sccr::mean(b), WithinRel(0.95 / 26.55, 1e-15));
}

TEST_CASE("quantile fit recovers known gamma parameters", "[impact_model]") {
    auto oracle_cdf = [](double x) { return oracle::gamma_cdf_quadrature(3.0, 0.5, x); };
    const sccr::QuantileSpec spec{{0.25, 0.75}, {invert(oracle_cdf, 0.25, 0.0, 100.0), invert(oracle_cdf, 0.75, 0.0, 100.0)}};
    const auto d = sccr::fit_quantiles(sccr::Family::gamma, spec);
    CHECK_THAT(d.first, WithinRel(3.0, 1e-4));
    CHECK_THAT(d.second, WithinRel(0.5, 1e-4));
    CHECK(d.fit_residual < 1e-15);
}

TEST_CASE("quantile fit recovers known beta parameters", "[impact_model]") {
    auto oracle_cdf = [](double x) { return oracle::beta_cdf_quadrature(2.0, 5.0, x); };
    const sccr::QuantileSpec spec{{0.1, 0.5, 0.9},
                                  {invert(oracle_cdf, 0.1, 0.0, 1.0), invert(oracle_cdf, 0.5, 0.0, 1.0),
                                   invert(oracle_cdf, 0.9, 0.0, 1.0)}};
    const auto d = sccr::fit_quantiles(sccr::Family::beta, spec);
    CHECK_THAT(d.first, WithinRel(2.0, 1e-4));
    CHECK_THAT(d.second, WithinRel(5.0, 1e-4));
}

TEST_CASE("quartile fits of the shipped impact file reproduce their quartiles", "[impact_model]") {
    const auto m = sccr::io::impact_model_from_json(sccr::io::read_json_file(SCCR_DATA_DIR "/impacts.json"));
    CHECK_THAT(oracle::gamma_cdf_quadrature(m.company_downtime.first, m.company_downtime.second, 2.0),
               WithinAbs(0.25, 1e-6));
    CHECK_THAT(oracle::gamma_cdf_quadrature(m.company_downtime.first, m.company_downtime.second, 6.0),
               WithinAbs(0.75, 1e-6));
    CHECK_THAT(m.company_downtime.first, WithinAbs(1.79, 0.01));
    CHECK_THAT(m.company_downtime.second, WithinAbs(0.40, 0.01));
    const auto& s1 = m.supplier_downtime.at("s1");
    CHECK_THAT(s1.first, WithinAbs(1.21, 0.01));
    CHECK_THAT(s1.second, WithinAbs(0.42, 0.01));
    const auto& rep = m.lost_customers;
    CHECK_THAT(oracle::beta_cdf_quadrature(rep.first, rep.second, 0.01), WithinAbs(0.25, 1e-6));
    CHECK_THAT(oracle::beta_cdf_quadrature(rep.first, rep.second, 0.05), WithinAbs(0.75, 1e-6));
}

TEST_CASE("fit input validation and non-convergence", "[impact_model]") {
    CHECK_THROWS_AS(sccr::fit_quantiles(sccr::Family::gamma, {{0.25}, {2.0}}), sccr::ValidationError);
    CHECK_THROWS_AS(sccr::fit_quantiles(sccr::Family::gamma, {{0.25, 0.75}, {6.0, 2.0}}), sccr::ValidationError);
    CHECK_THROWS_AS(sccr::fit_quantiles(sccr::Family::gamma, {{0.75, 0.25}, {2.0, 6.0}}), sccr::ValidationError);
    CHECK_THROWS_AS(sccr::fit_quantiles(sccr::Family::beta, {{0.25, 0.75}, {0.5, 1.5}}), sccr::ValidationError);
    CHECK_THROWS_AS(sccr::fit_quantiles(sccr::Family::gamma, {{0.0, 0.75}, {2.0, 6.0}}), sccr::ValidationError);

    sccr::FitOptions starved;
    starved.simplex.max_iterations = 2;
    CHECK_THROWS_AS(sccr::fit_quantiles(sccr::Family::gamma, {{0.25, 0.75}, {2.0, 6.0}}, starved),
                    sccr::ConvergenceError);
}

TEST_CASE("sampling matches the fitted mean", "[impact_model]") {
    std::mt19937_64 rng(7);
    for (const sccr::FittedDistribution d :
         {sccr::FittedDistribution{sccr::Family::gamma, 1.79, 0.40, 0.0},
          sccr::FittedDistribution{sccr::Family::beta, 0.95, 25.6, 0.0}}) {
        const int n = 200000;
        double sum = 0.0;
        double sq = 0.0;
        for (int i = 0; i < n; ++i) {
            const double x = sccr::sample(d, rng);
            sum += x;
            sq += x * x;
        }
        const double m = sum / n;
        const double se = std::sqrt((sq / n - m * m) / n);
        CHECK(std::fabs(m - sccr::mean(d)) < 4.0 * se);
    }
}

TEST_CASE("cost functions", "[impact_model]") {
    CHECK(sccr::downtime_cost(20000.0, 4.5) == 90000.0);
    CHECK_THAT(sccr::reputation_cost(0.03, 0.18, 2922e9), WithinRel(0.03 * 0.18 * 2922e9, 1e-15));
    CHECK_THROWS_AS(sccr::downtime_cost(-1.0, 2.0), sccr::ValidationError);
    CHECK_THROWS_AS(sccr::reputation_cost(1.5, 0.18, 1.0), sccr::ValidationError);
}

TEST_CASE("utility is linear in the risk-neutral limit and concave otherwise", "[impact_model]") {
    CHECK(sccr::utility(1234.5, 0.0) == 1234.5);
    CHECK_THAT(sccr::utility(1234.5, 1e-15), WithinRel(1234.5, 1e-9));
    const double rho = 1e-5;
    CHECK_THAT(sccr::utility(1e5, rho), WithinRel((1.0 - std::exp(-1.0)) / rho, 1e-14));
    CHECK(sccr::utility(2e5, rho) < 2.0 * sccr::utility(1e5, rho));
}

TEST_CASE("expected costs from the impact file", "[impact_model]") {
    const auto m = sccr::io::impact_model_from_json(sccr::io::read_json_file(SCCR_DATA_DIR "/impacts.json"));
    const auto c = sccr::expected_costs(m);
    CHECK_THAT(c.company_downtime, WithinRel(20000.0 * m.company_downtime.first / m.company_downtime.second, 1e-14));
    const auto& rep = m.lost_customers;
    CHECK_THAT(c.reputation, WithinRel(rep.first / (rep.first + rep.second) * 0.18 * 2922e9, 1e-14));
    CHECK(c.supplier_downtime.size() == 2);

    const auto j = sccr::io::impact_model_to_json(m);
    const auto back = sccr::io::impact_model_from_json(j);
    CHECK(back.company_downtime.first == m.company_downtime.first);
    CHECK(back.lost_customers.second == m.lost_customers.second);
}
