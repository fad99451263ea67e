#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "rulebayes/optim.hpp"

using namespace rulebayes;

namespace {

double rosenbrock(std::span<const double> x) {
    const double a = 1.0 - x[0];
    const double b = x[1] - x[0] * x[0];
    return a * a + 100.0 * b * b;
}

} // namespace

TEST(NelderMead, OneDimensionalQuadratic) {
    const std::vector<double> x0{10.0};
    SimplexConfig cfg;
    cfg.x_tol = 1e-10;
    cfg.f_tol = 1e-14;
    const auto r = nelder_mead([](std::span<const double> x) { return (x[0] - 2) * (x[0] - 2); }, x0, cfg);
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.argmin[0], 2.0, 1e-6);
}

TEST(NelderMead, Rosenbrock) {
    const std::vector<double> x0{-1.2, 1.0};
    SimplexConfig cfg;
    cfg.max_evaluations = 5000;
    cfg.x_tol = 1e-9;
    cfg.f_tol = 1e-16;
    const auto r = nelder_mead(rosenbrock, x0, cfg);
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.argmin[0], 1.0, 1e-4);
    EXPECT_NEAR(r.argmin[1], 1.0, 1e-4);
    EXPECT_LE(r.evaluations, cfg.max_evaluations);
}

TEST(NelderMead, ConstantObjectiveStaysAtStart) {
    const std::vector<double> x0{0.3, -2.0, 0.0};
    const auto r = nelder_mead([](std::span<const double>) { return 4.0; }, x0);
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.argmin, x0);
    EXPECT_EQ(r.value, 4.0);
}

TEST(NelderMead, BestValueNonIncreasing) {
    const std::vector<double> x0{-1.2, 1.0};
    const auto r = nelder_mead(rosenbrock, x0);
    ASSERT_FALSE(r.history.empty());
    for (std::size_t i = 1; i < r.history.size(); ++i) {
        ASSERT_LE(r.history[i], r.history[i - 1]);
    }
}

TEST(NelderMead, TranslationEquivariance) {
    const std::vector<double> x0{-1.2, 1.0};
    const std::vector<double> c{3.0, -5.0};
    SimplexConfig cfg;
    cfg.initial_step = {0.1, 0.1};
    const auto base = nelder_mead(rosenbrock, x0, cfg);
    const std::vector<double> shifted_start{x0[0] + c[0], x0[1] + c[1]};
    const auto shifted = nelder_mead(
        [&](std::span<const double> x) {
            const std::vector<double> y{x[0] - c[0], x[1] - c[1]};
            return rosenbrock(y);
        },
        shifted_start, cfg);
    EXPECT_NEAR(shifted.argmin[0] - c[0], base.argmin[0], 1e-9);
    EXPECT_NEAR(shifted.argmin[1] - c[1], base.argmin[1], 1e-9);
}

TEST(NelderMead, EvaluationBudgetRespected) {
    const std::vector<double> x0{-1.2, 1.0};
    for (const int budget : {1, 2, 3, 4, 7, 50}) {
        SimplexConfig cfg;
        cfg.max_evaluations = budget;
        const auto r = nelder_mead(rosenbrock, x0, cfg);
        EXPECT_LE(r.evaluations, budget);
        EXPECT_FALSE(r.converged);
    }
}

TEST(NelderMead, NonFiniteStartIsAnError) {
    const std::vector<double> x0{-1.0};
    EXPECT_THROW((void)nelder_mead([](std::span<const double> x) { return std::log(x[0]); }, x0), NumericalError);
}

TEST(NelderMead, InfiniteRegionsAreAvoided) {
    const std::vector<double> x0{1.0};
    const auto r = nelder_mead(
        [](std::span<const double> x) { return x[0] <= 0 ? INFINITY : x[0] - std::log(x[0]); }, x0);
    EXPECT_NEAR(r.argmin[0], 1.0, 1e-4);
}

TEST(NelderMead, InvalidCoefficientsRejected) {
    SimplexConfig cfg;
    cfg.gamma = 1.0;
    const std::vector<double> x0{0.0};
    EXPECT_THROW((void)nelder_mead([](std::span<const double> x) { return x[0]; }, x0, cfg), ConfigError);
}
