#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "rulebayes/error.hpp"

namespace rulebayes {

/// Normal(mu, sigma), HalfCauchy(scale) on [0, inf) or Gamma(shape, rate).
class PriorSpec {
public:
    enum class Family { Normal, HalfCauchy, Gamma };

    static PriorSpec normal(double mu, double sigma) {
        if (!(sigma > 0.0)) {
            throw ValidationError("Normal prior needs sigma > 0");
        }
        return PriorSpec(Family::Normal, mu, sigma);
    }
    static PriorSpec half_cauchy(double scale) {
        if (!(scale > 0.0)) {
            throw ValidationError("HalfCauchy prior needs scale > 0");
        }
        return PriorSpec(Family::HalfCauchy, scale, 0.0);
    }
    static PriorSpec gamma(double shape, double rate) {
        if (!(shape > 0.0) || !(rate > 0.0)) {
            throw ValidationError("Gamma prior needs shape > 0 and rate > 0");
        }
        return PriorSpec(Family::Gamma, shape, rate);
    }

    [[nodiscard]] Family family() const noexcept { return family_; }
    [[nodiscard]] double p1() const noexcept { return p1_; }
    [[nodiscard]] double p2() const noexcept { return p2_; }

    [[nodiscard]] double log_density(double x) const {
        constexpr double neg_inf = -std::numeric_limits<double>::infinity();
        switch (family_) {
        case Family::Normal: {
            const double z = (x - p1_) / p2_;
            return -0.5 * z * z - std::log(p2_) - 0.5 * std::log(2.0 * std::numbers::pi);
        }
        case Family::HalfCauchy: {
            if (x < 0.0) {
                return neg_inf;
            }
            const double z = x / p1_;
            return std::log(2.0 / (std::numbers::pi * p1_)) - std::log1p(z * z);
        }
        case Family::Gamma: {
            if (x < 0.0 || (x == 0.0 && p1_ > 1.0)) {
                return neg_inf;
            }
            if (x == 0.0 && p1_ == 1.0) {
                return std::log(p2_);
            }
            return p1_ * std::log(p2_) - std::lgamma(p1_) + (p1_ - 1.0) * std::log(x) - p2_ * x;
        }
        }
        return neg_inf;
    }

    /// Default starting value: the mean, or the scale for HalfCauchy.
    [[nodiscard]] double center() const noexcept {
        switch (family_) {
        case Family::Normal:
            return p1_;
        case Family::HalfCauchy:
            return p1_;
        case Family::Gamma:
            return p1_ / p2_;
        }
        return 0.0;
    }

    /// Spread used to size default proposals (the scale for HalfCauchy).
    [[nodiscard]] double spread() const noexcept {
        switch (family_) {
        case Family::Normal:
            return p2_;
        case Family::HalfCauchy:
            return p1_;
        case Family::Gamma:
            return std::sqrt(p1_) / p2_;
        }
        return 1.0;
    }

    friend bool operator==(const PriorSpec&, const PriorSpec&) = default;

private:
    PriorSpec(Family f, double a, double b) : family_(f), p1_(a), p2_(b) {}

    Family family_;
    double p1_;
    double p2_;
};

using PriorMap = std::map<std::string, PriorSpec>;

/// Sum of prior log densities; -inf for out-of-support values.
inline double log_prior(std::span<const std::string> names, std::span<const double> values, const PriorMap& priors) {
    if (names.size() != values.size()) {
        throw ValidationError("log_prior: names and values differ in length");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < names.size(); ++i) {
        const auto it = priors.find(names[i]);
        if (it == priors.end()) {
            throw ValidationError("no prior for parameter '" + names[i] + "'");
        }
        total += it->second.log_density(values[i]);
    }
    return total;
}

} // namespace rulebayes
