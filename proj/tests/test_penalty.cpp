#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <stdexcept>

#include "rulebayes/penalty.hpp"
#include "rulebayes/rule_parser.hpp"
#include "support.hpp"

using namespace rulebayes;
using testing_support::FnPredictor;
using testing_support::simpson;

namespace {

VariableTable linreg_vars() {
    VariableTable v;
    v.inputs = {"x"};
    v.outputs = {{"y", 1}};
    return v;
}

RuleBase linreg_rules() {
    return parse_rule_base(R"(
RULE r1: IF x >= 0 AND x <= 1 THEN y >= 0 AND y <= 4 DISCRETIZE x: linspace(0, 1, 20)
RULE r2: IF x >= 9 AND x <= 10 THEN y >= 18 AND y <= 22 DISCRETIZE x: linspace(9, 10, 20)
COMPOSE r1 AND r2
)",
                           linreg_vars());
}

FnPredictor line(double a, double b) {
    return FnPredictor([a, b](std::span<const double> in, int) { return a + b * in[0]; }, {0.0});
}

} // namespace

TEST(BetaLogDensity, Examples) {
    EXPECT_EQ(beta_log_density(0.37, ConfidenceSpec{}), 0.0);
    EXPECT_NEAR(beta_log_density(0.0, ConfidenceSpec(1, 100)), std::log(100.0), 1e-12);
    // Independent closed form b (1 - x)^(b - 1) for a = 1.
    EXPECT_NEAR(beta_log_density(0.5, ConfidenceSpec(1, 5)), std::log(5.0 * std::pow(0.5, 4)), 1e-12);
    EXPECT_NEAR(beta_log_density(0.5, ConfidenceSpec(1, 5)), -1.16315, 1e-5);
}

TEST(BetaLogDensity, ZeroDensityIsMinusInfinity) {
    EXPECT_EQ(beta_log_density(1.0, ConfidenceSpec(1, 100)), -std::numeric_limits<double>::infinity());
    EXPECT_EQ(beta_log_density(0.0, ConfidenceSpec(3, 2)), -std::numeric_limits<double>::infinity());
}

TEST(BetaLogDensity, OutsideUnitIntervalIsContractViolation) {
    EXPECT_THROW((void)beta_log_density(-0.01, ConfidenceSpec(1, 5)), std::domain_error);
    EXPECT_THROW((void)beta_log_density(1.5, ConfidenceSpec{}), std::domain_error);
    EXPECT_THROW((void)beta_log_density(std::nan(""), ConfidenceSpec{}), std::domain_error);
}

TEST(BetaLogDensity, InvalidShapesRejected) {
    EXPECT_THROW(ConfidenceSpec(0, 1), ValidationError);
    EXPECT_THROW(ConfidenceSpec(1, -2), ValidationError);
}

TEST(BetaLogDensity, StrictRuleShapeIsDecreasing) {
    for (const double b : {2.0, 5.0, 100.0}) {
        const ConfidenceSpec c(1, b);
        double prev = beta_log_density(0.0, c);
        for (int i = 1; i < 1000; ++i) {
            const double v = beta_log_density(i / 1000.0, c);
            ASSERT_LT(v, prev);
            prev = v;
        }
    }
}

TEST(BetaLogDensity, IntegratesToOne) {
    for (const auto& c : {ConfidenceSpec(1, 1), ConfidenceSpec(1, 5), ConfidenceSpec(1, 100)}) {
        const double mass = simpson([&](double x) { return std::exp(beta_log_density(x, c)); }, 0.0, 1.0, 200000);
        EXPECT_NEAR(mass, 1.0, 1e-6) << "b = " << c.b;
    }
}

TEST(RuleLogPenalty, Examples) {
    const auto rb = linreg_rules();
    EXPECT_NEAR(rule_log_penalty(rb, line(1, 2), ConfidenceSpec(1, 100)), std::log(100.0), 1e-12);
    EXPECT_EQ(rule_log_penalty(rb, line(50, -3), ConfidenceSpec{}), 0.0);
    EXPECT_NEAR(rule_log_penalty(rb, line(3, 0), ConfidenceSpec(1, 5)), std::log(5.0 * std::pow(0.5, 4)), 1e-12);
    EXPECT_EQ(rule_log_penalty(rb, line(100, 0), ConfidenceSpec(1, 100)), -std::numeric_limits<double>::infinity());
}

TEST(RuleLogPenalty, UniformConfidenceIsIdenticallyZero) {
    const auto rb = linreg_rules();
    for (int i = -20; i <= 20; ++i) {
        EXPECT_EQ(rule_log_penalty(rb, line(i, 0.7 * i), ConfidenceSpec{}), 0.0);
    }
}

TEST(RuleLogPenalty, PerRuleConfidencesSum) {
    const auto rb = parse_rule_base(R"(
RULE r1: IF x >= 0 AND x <= 1 THEN y <= 4 DISCRETIZE x: linspace(0, 1, 4) CONFIDENCE beta(1, 5)
RULE r2: IF x >= 9 AND x <= 10 THEN y >= 18 DISCRETIZE x: linspace(9, 10, 4) CONFIDENCE beta(2, 3)
RULE r3: IF x >= 0 THEN y <= 100 DISCRETIZE x: [0, 5]
COMPOSE r1 AND r2 AND r3
)",
                                    linreg_vars());
    // r1 violated at x = 0, 1/3; r2 violated at x = 9, 9 1/3; r3 never.
    const FnPredictor p(
        [](std::span<const double> in, int) {
            const double x = in[0];
            if (x < 5) {
                return x < 0.5 ? 4.5 : 3.0;
            }
            return x < 9.5 ? 17.0 : 19.0;
        },
        {0.0});
    // Closed forms: Beta(1,5) at 0.5 is 5 * 0.5^4, Beta(2,3) at 0.5 is 12 * 0.5 * 0.5^2, Beta(1,100) at 0 is 100.
    const double expected = std::log(5.0 * std::pow(0.5, 4)) + std::log(12.0 * 0.5 * 0.25) + std::log(100.0);
    EXPECT_NEAR(rule_log_penalty(rb, p, ConfidenceSpec(1, 100)), expected, 1e-12);

    // A fully violated Beta(2,3) rule has zero density.
    EXPECT_EQ(rule_log_penalty(rb, line(3, 0), ConfidenceSpec(1, 100)), -std::numeric_limits<double>::infinity());
}
