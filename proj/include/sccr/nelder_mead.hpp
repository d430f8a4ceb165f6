#pragma once

// Derivative-free simplex minimization (Nelder-Mead with the standard
// reflection/expansion/contraction/shrink coefficients 1, 2, 1/2, 1/2).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <vector>

namespace sccr::optim {

struct NelderMeadOptions {
    double initial_step = 0.5;
    double diameter_tolerance = 1e-10;
    int max_iterations = 2000;
};

struct NelderMeadResult {
    std::vector<double> x;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;  // simplex diameter reached the tolerance
};

template <typename Objective>
NelderMeadResult nelder_mead(Objective&& f, std::vector<double> start,
                             const NelderMeadOptions& opt = {}) {
    const std::size_t n = start.size();
    std::vector<std::vector<double>> simplex(n + 1, start);
    for (std::size_t i = 0; i < n; ++i) simplex[i + 1][i] += opt.initial_step;
    std::vector<double> values(n + 1);
    for (std::size_t i = 0; i <= n; ++i) values[i] = f(simplex[i]);

    auto diameter = [&] {
        double d = 0.0;
        for (std::size_t i = 1; i <= n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                d = std::max(d, std::fabs(simplex[i][j] - simplex[0][j]));
            }
        }
        return d;
    };

    std::vector<std::size_t> order(n + 1);
    NelderMeadResult result;
    int iter = 0;
    for (; iter < opt.max_iterations; ++iter) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
        {
            std::vector<std::vector<double>> s2;
            std::vector<double> v2;
            for (auto k : order) {
                s2.push_back(simplex[k]);
                v2.push_back(values[k]);
            }
            simplex.swap(s2);
            values.swap(v2);
        }
        if (diameter() < opt.diameter_tolerance) {
            result.converged = true;
            break;
        }

        std::vector<double> centroid(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) centroid[j] += simplex[i][j] / static_cast<double>(n);
        }
        auto along = [&](double t) {
            std::vector<double> p(n);
            for (std::size_t j = 0; j < n; ++j) p[j] = centroid[j] + t * (simplex[n][j] - centroid[j]);
            return p;
        };

        auto reflected = along(-1.0);
        const double fr = f(reflected);
        if (fr < values[0]) {
            auto expanded = along(-2.0);
            const double fe = f(expanded);
            if (fe < fr) {
                simplex[n] = std::move(expanded);
                values[n] = fe;
            } else {
                simplex[n] = std::move(reflected);
                values[n] = fr;
            }
            continue;
        }
        if (fr < values[n - 1]) {
            simplex[n] = std::move(reflected);
            values[n] = fr;
            continue;
        }
        const bool outside = fr < values[n];
        auto contracted = along(outside ? -0.5 : 0.5);
        const double fc = f(contracted);
        if (fc < (outside ? fr : values[n])) {
            simplex[n] = std::move(contracted);
            values[n] = fc;
            continue;
        }
        for (std::size_t i = 1; i <= n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                simplex[i][j] = simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j]);
            }
            values[i] = f(simplex[i]);
        }
    }
    const auto best = static_cast<std::size_t>(
        std::min_element(values.begin(), values.end()) - values.begin());
    result.x = simplex[best];
    result.value = values[best];
    result.iterations = iter;
    return result;
}

}  // namespace sccr::optim
