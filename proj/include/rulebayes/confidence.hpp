#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

#include "rulebayes/error.hpp"

namespace rulebayes {

/// Beta(a, b) confidence placed on a rule base's violation ratio.
/// Beta(1, 1) is uniform and leaves the posterior untouched; Beta(1, b) with
/// large b concentrates the mass near a zero violation ratio.
struct ConfidenceSpec {
    double a = 1.0;
    double b = 1.0;

    ConfidenceSpec() = default;
    ConfidenceSpec(double shape_a, double shape_b) : a(shape_a), b(shape_b) {
        if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
            throw ValidationError("confidence shapes must be positive and finite");
        }
    }

    [[nodiscard]] bool uniform() const noexcept { return a == 1.0 && b == 1.0; }

    friend bool operator==(const ConfidenceSpec&, const ConfidenceSpec&) = default;
};

namespace detail {

// (shape - 1) * log(v), with the 0 * log(0) case resolved by the shape alone.
inline double beta_shape_term(double shape, double v) {
    if (shape == 1.0) {
        return 0.0;
    }
    if (v == 0.0) {
        return shape > 1.0 ? -std::numeric_limits<double>::infinity()
                           : std::numeric_limits<double>::infinity();
    }
    return (shape - 1.0) * std::log(v);
}

} // namespace detail

/// Log of the Beta(a, b) density at x. Returns -inf where the density is
/// exactly zero (e.g. a = 1, b > 1 at x = 1). x outside [0, 1] throws
/// std::domain_error.
inline double beta_log_density(double x, const ConfidenceSpec& conf) {
    if (!(x >= 0.0 && x <= 1.0)) {
        throw std::domain_error("beta_log_density: x must lie in [0, 1]");
    }
    if (conf.uniform()) {
        return 0.0;
    }
    const double log_norm = std::lgamma(conf.a + conf.b) - std::lgamma(conf.a) - std::lgamma(conf.b);
    const double left = detail::beta_shape_term(conf.a, x);
    const double right = detail::beta_shape_term(conf.b, 1.0 - x);
    return log_norm + left + right;
}

} // namespace rulebayes
