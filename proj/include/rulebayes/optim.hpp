#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "rulebayes/error.hpp"

namespace rulebayes {

struct SimplexConfig {
    double alpha = 1.0; // reflection
    double gamma = 2.0; // expansion
    double rho = 0.5;   // contraction
    double sigma = 0.5; // shrink
    std::vector<double> initial_step; // empty: 5% of |x0_j|, or 0.05 when x0_j == 0
    int max_evaluations = 2000;
    double f_tol = 1e-8;
    double x_tol = 1e-8;

    void validate() const {
        if (!(alpha > 0.0) || !(gamma > 1.0) || !(rho > 0.0 && rho < 1.0) || !(sigma > 0.0 && sigma < 1.0)) {
            throw ConfigError("Nelder-Mead coefficients out of range");
        }
        if (!(f_tol > 0.0) || !(x_tol > 0.0)) {
            throw ConfigError("Nelder-Mead tolerances must be positive");
        }
        if (max_evaluations < 1) {
            throw ConfigError("Nelder-Mead needs at least one evaluation");
        }
    }
};

struct SimplexResult {
    std::vector<double> argmin;
    double value = 0.0;
    int evaluations = 0;
    bool converged = false;
    std::vector<double> history; // best value after each iteration
};

using Objective = std::function<double(std::span<const double>)>;

/// Nelder-Mead minimization. Non-finite objective values away from x0 are
/// treated as +inf.
inline SimplexResult nelder_mead(const Objective& f, std::span<const double> x0, const SimplexConfig& cfg = {}) {
    cfg.validate();
    const std::size_t n = x0.size();
    if (n == 0) {
        throw ValidationError("nelder_mead: empty start vector");
    }
    if (!cfg.initial_step.empty() && cfg.initial_step.size() != n) {
        throw ConfigError("nelder_mead: initial step has the wrong dimension");
    }

    SimplexResult result;
    const auto eval = [&](std::span<const double> x) {
        ++result.evaluations;
        const double v = f(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    };

    std::vector<std::vector<double>> vertex(n + 1, std::vector<double>(x0.begin(), x0.end()));
    std::vector<double> value(n + 1);
    ++result.evaluations;
    value[0] = f(x0);
    if (!std::isfinite(value[0])) {
        throw NumericalError("nelder_mead: objective is not finite at the start point");
    }
    for (std::size_t j = 0; j < n && result.evaluations < cfg.max_evaluations; ++j) {
        double step = cfg.initial_step.empty() ? 0.05 * std::abs(x0[j]) : cfg.initial_step[j];
        if (step == 0.0) {
            step = 0.05;
        }
        vertex[j + 1][j] += step;
        value[j + 1] = eval(vertex[j + 1]);
    }
    if (result.evaluations < static_cast<int>(n) + 1) {
        // Budget exhausted while building the simplex.
        result.argmin.assign(x0.begin(), x0.end());
        result.value = value[0];
        return result;
    }

    std::vector<std::size_t> order(n + 1);
    std::vector<double> centroid(n), xr(n), xe(n), xc(n);
    const auto sort_vertices = [&] {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return value[a] < value[b]; });
        std::vector<std::vector<double>> v2(n + 1);
        std::vector<double> f2(n + 1);
        for (std::size_t i = 0; i <= n; ++i) {
            v2[i] = std::move(vertex[order[i]]);
            f2[i] = value[order[i]];
        }
        vertex = std::move(v2);
        value = std::move(f2);
    };
    const auto converged = [&] {
        if (!std::isfinite(value[n])) {
            return false;
        }
        if (value[n] - value[0] > cfg.f_tol) {
            return false;
        }
        double diameter = 0.0;
        for (std::size_t i = 1; i <= n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                diameter = std::max(diameter, std::abs(vertex[i][j] - vertex[0][j]));
            }
        }
        return diameter <= cfg.x_tol;
    };

    sort_vertices();
    while (true) {
        if (converged()) {
            result.converged = true;
            break;
        }
        if (result.evaluations >= cfg.max_evaluations) {
            break;
        }
        std::fill(centroid.begin(), centroid.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                centroid[j] += vertex[i][j];
            }
        }
        for (double& c : centroid) {
            c /= static_cast<double>(n);
        }
        const auto& worst = vertex[n];
        for (std::size_t j = 0; j < n; ++j) {
            xr[j] = centroid[j] + cfg.alpha * (centroid[j] - worst[j]);
        }
        const double fr = eval(xr);
        bool shrink = false;
        if (fr < value[0]) {
            if (result.evaluations < cfg.max_evaluations) {
                for (std::size_t j = 0; j < n; ++j) {
                    xe[j] = centroid[j] + cfg.gamma * (xr[j] - centroid[j]);
                }
                const double fe = eval(xe);
                if (fe < fr) {
                    vertex[n] = xe;
                    value[n] = fe;
                } else {
                    vertex[n] = xr;
                    value[n] = fr;
                }
            } else {
                vertex[n] = xr;
                value[n] = fr;
            }
        } else if (fr < value[n - 1]) {
            vertex[n] = xr;
            value[n] = fr;
        } else if (result.evaluations < cfg.max_evaluations) {
            if (fr < value[n]) {
                // Outside contraction.
                for (std::size_t j = 0; j < n; ++j) {
                    xc[j] = centroid[j] + cfg.rho * (xr[j] - centroid[j]);
                }
                const double fc = eval(xc);
                if (fc <= fr) {
                    vertex[n] = xc;
                    value[n] = fc;
                } else {
                    shrink = true;
                }
            } else {
                // Inside contraction.
                for (std::size_t j = 0; j < n; ++j) {
                    xc[j] = centroid[j] + cfg.rho * (worst[j] - centroid[j]);
                }
                const double fc = eval(xc);
                if (fc < value[n]) {
                    vertex[n] = xc;
                    value[n] = fc;
                } else {
                    shrink = true;
                }
            }
        }
        if (shrink) {
            for (std::size_t i = 1; i <= n && result.evaluations < cfg.max_evaluations; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    vertex[i][j] = vertex[0][j] + cfg.sigma * (vertex[i][j] - vertex[0][j]);
                }
                value[i] = eval(vertex[i]);
            }
        }
        sort_vertices();
        result.history.push_back(value[0]);
    }
    result.argmin = vertex[0];
    result.value = value[0];
    return result;
}

} // namespace rulebayes
