#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "rulebayes/models.hpp"
#include "rulebayes/priors.hpp"
#include "support.hpp"

using namespace rulebayes;

namespace {

// Independent normal log-pdf.
double normal_lpdf(double x, double mu, double sd) {
    return std::log(std::exp(-0.5 * (x - mu) * (x - mu) / (sd * sd)) / (sd * std::sqrt(2.0 * std::numbers::pi)));
}

LinearModel simple_linear(double sigma) {
    LinearModelSpec spec;
    spec.intercept_prior = PriorSpec::normal(0.5, 0.5);
    spec.slopes = {{"x", "beta", PriorSpec::normal(0.5, 0.5)}};
    spec.noise_sd = sigma;
    return LinearModel(spec);
}

} // namespace

TEST(LogPrior, Examples) {
    const std::vector<std::string> one{"a"};
    const std::vector<double> zero{0.0};
    EXPECT_NEAR(log_prior(one, zero, {{"a", PriorSpec::normal(0, 1)}}), -0.5 * std::log(2 * std::numbers::pi), 1e-12);
    EXPECT_NEAR(log_prior(one, zero, {{"a", PriorSpec::normal(0, 1)}}), -0.918939, 1e-6);

    const std::vector<double> neg{-0.1};
    EXPECT_EQ(log_prior(one, neg, {{"a", PriorSpec::half_cauchy(1)}}), -std::numeric_limits<double>::infinity());

    const std::vector<std::string> two{"alpha", "beta"};
    const std::vector<double> half{0.5, 0.5};
    const PriorMap priors{{"alpha", PriorSpec::normal(0.5, 0.5)}, {"beta", PriorSpec::normal(0.5, 0.5)}};
    EXPECT_NEAR(log_prior(two, half, priors), 2 * normal_lpdf(0.5, 0.5, 0.5), 1e-12);
    EXPECT_NEAR(log_prior(two, half, priors), -0.451582, 1e-6);
}

TEST(LogPrior, MissingPriorIsAnError) {
    const std::vector<std::string> names{"a", "b"};
    const std::vector<double> v{0.0, 0.0};
    EXPECT_THROW((void)log_prior(names, v, {{"a", PriorSpec::normal(0, 1)}}), ValidationError);
}

TEST(LogPrior, DensitiesNormalize) {
    using testing_support::simpson;
    for (const auto& p : {PriorSpec::normal(0.5, 0.5), PriorSpec::half_cauchy(0.1), PriorSpec::gamma(1, 1),
                          PriorSpec::gamma(2.5, 3)}) {
        double mass = 0.0;
        if (p.family() == PriorSpec::Family::Normal) {
            mass = simpson([&](double x) { return std::exp(p.log_density(x)); }, -5, 6, 20000);
        } else if (p.family() == PriorSpec::Family::HalfCauchy) {
            // Substitute x = s tan(u) to integrate the heavy tail on a finite range.
            mass = simpson(
                [&](double u) {
                    const double s = p.p1();
                    if (u >= std::numbers::pi / 2) {
                        return 2.0 / std::numbers::pi;
                    }
                    const double x = s * std::tan(u);
                    return std::exp(p.log_density(x)) * s / (std::cos(u) * std::cos(u));
                },
                0.0, std::numbers::pi / 2, 20000);
        } else {
            mass = simpson([&](double x) { return std::exp(p.log_density(x)); }, 0, 60, 200000);
        }
        EXPECT_NEAR(mass, 1.0, 1e-6);
    }
}

TEST(PriorSpec, InvalidParametersRejected) {
    EXPECT_THROW((void)PriorSpec::normal(0, 0), ValidationError);
    EXPECT_THROW((void)PriorSpec::half_cauchy(-1), ValidationError);
    EXPECT_THROW((void)PriorSpec::gamma(1, 0), ValidationError);
}

TEST(LogLikelihood, Examples) {
    const auto model = simple_linear(3.0);
    RegressionData data;
    data.inputs.resize(1, 1);
    data.inputs << 2.0;
    data.targets.resize(1);
    data.targets << 5.0; // 1 + 2 * 2
    const std::vector<double> theta{1.0, 2.0};
    const double perfect = log_likelihood(model, theta, data);
    EXPECT_NEAR(perfect, -std::log(3.0 * std::sqrt(2.0 * std::numbers::pi)), 1e-12);
    EXPECT_NEAR(perfect, -2.01755, 1e-5);

    data.targets << 8.0; // residual = sigma
    EXPECT_NEAR(log_likelihood(model, theta, data), perfect - 0.5, 1e-12);

    RegressionData empty;
    empty.inputs.resize(0, 1);
    empty.targets.resize(0);
    EXPECT_EQ(log_likelihood(model, theta, empty), 0.0);
}

TEST(LogLikelihood, DimensionMismatch) {
    const auto model = simple_linear(1.0);
    RegressionData data;
    data.inputs.resize(2, 1);
    data.inputs << 1, 2;
    data.targets.resize(3);
    data.targets << 1, 2, 3;
    const std::vector<double> theta{1.0, 2.0};
    EXPECT_THROW((void)log_likelihood(model, theta, data), ValidationError);
    const std::vector<double> short_theta{1.0};
    data.targets.resize(2);
    EXPECT_THROW((void)log_likelihood(model, short_theta, data), ValidationError);
}

TEST(LogLikelihood, MatchesIndependentSum) {
    std::mt19937 rng(3);
    std::normal_distribution<double> n(0, 1);
    LinearModelSpec spec;
    spec.slopes = {{"a", "w1", PriorSpec::normal(0, 10)}, {"b", "w2", PriorSpec::normal(0, 10)}};
    spec.noise_sd = 1.7;
    const LinearModel model(spec);
    RegressionData data;
    data.inputs.resize(30, 2);
    data.targets.resize(30);
    for (int i = 0; i < 30; ++i) {
        data.inputs(i, 0) = n(rng);
        data.inputs(i, 1) = n(rng);
        data.targets(i) = n(rng);
    }
    const std::vector<double> theta{0.3, -1.1, 2.2};
    double expected = 0.0;
    for (int i = 0; i < 30; ++i) {
        expected += normal_lpdf(data.targets(i), 0.3 - 1.1 * data.inputs(i, 0) + 2.2 * data.inputs(i, 1), 1.7);
    }
    EXPECT_NEAR(log_likelihood(model, theta, data), expected, 1e-9);
}

TEST(LinearModel, Predict) {
    const auto model = simple_linear(1.0);
    const std::vector<double> theta{1.0, 2.0};
    const std::vector<double> x{4.5};
    EXPECT_EQ(model.predict(theta, x, 0), 10.0);

    LinearModelSpec spec;
    spec.intercept_name = "b";
    for (const char* f : {"AT", "AP", "RH", "V"}) {
        spec.slopes.push_back({f, std::string(f) + "_co", PriorSpec::normal(0, 10)});
    }
    const LinearModel multi(spec);
    const std::vector<double> coef{7.25, 0, 0, 0, 0};
    const std::vector<double> feats{30, 1010, 60, 70};
    EXPECT_EQ(multi.predict(coef, feats, 0), 7.25);
}

TEST(LinearModel, OptionalNoiseParameter) {
    LinearModelSpec spec;
    spec.slopes = {{"x", "beta", PriorSpec::normal(0, 1)}};
    spec.noise_prior = PriorSpec::half_cauchy(1.0);
    const LinearModel model(spec);
    ASSERT_EQ(model.parameter_names().back(), "sigma");
    const std::vector<double> theta{0.0, 0.0, 2.5};
    EXPECT_EQ(model.noise_sd(theta), 2.5);
}

TEST(BSpline, PartitionOfUnity) {
    const auto knots = clamped_knots(0.0, 2 * std::numbers::pi, 10, 3);
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(0.0, 2 * std::numbers::pi);
    for (int i = 0; i < 1000; ++i) {
        const auto b = bspline_basis(u(rng), knots, 3);
        ASSERT_EQ(b.size(), 14U);
        double s = 0.0;
        for (const double v : b) {
            ASSERT_GE(v, 0.0);
            s += v;
        }
        ASSERT_NEAR(s, 1.0, 1e-12);
    }
    for (const double x : knots) {
        double s = 0.0;
        for (const double v : bspline_basis(x, knots, 3)) {
            s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(BSpline, ClampedEndpoints) {
    const auto knots = clamped_knots(0.0, 1.0, 10, 3);
    const auto first = bspline_basis(0.0, knots, 3);
    EXPECT_EQ(first[0], 1.0);
    for (std::size_t i = 1; i < first.size(); ++i) {
        EXPECT_EQ(first[i], 0.0);
    }
    const auto last = bspline_basis(1.0, knots, 3);
    EXPECT_EQ(last.back(), 1.0);
}

TEST(BSpline, DegreeZeroIsSpanIndicator) {
    const std::vector<double> knots{0, 1, 2, 3, 4};
    const auto b = bspline_basis(2.5, knots, 0);
    EXPECT_EQ(b, (std::vector<double>{0, 0, 1, 0}));
    EXPECT_EQ(bspline_basis(4.0, knots, 0), (std::vector<double>{0, 0, 0, 1}));
}

TEST(BSpline, OutOfRangeRejected) {
    const auto knots = clamped_knots(0.0, 1.0, 3, 3);
    EXPECT_THROW((void)bspline_basis(-1e-9, knots, 3), ValidationError);
    EXPECT_THROW((void)bspline_basis(1.1, knots, 3), ValidationError);
}

TEST(BSpline, CubicMatchesClosedFormWithoutInteriorKnots) {
    // With no interior knots the clamped cubic basis is the Bernstein basis.
    const auto knots = clamped_knots(0.0, 1.0, 0, 3);
    for (const double t : {0.0, 0.1, 0.37, 0.5, 0.92, 1.0}) {
        const auto b = bspline_basis(t, knots, 3);
        const double s = 1 - t;
        EXPECT_NEAR(b[0], s * s * s, 1e-14);
        EXPECT_NEAR(b[1], 3 * t * s * s, 1e-14);
        EXPECT_NEAR(b[2], 3 * t * t * s, 1e-14);
        EXPECT_NEAR(b[3], t * t * t, 1e-14);
    }
}

TEST(SplineCoefficients, Examples) {
    const std::vector<double> zeros(5, 0.0);
    for (const double c : spline_coefficients(0.7, zeros, 2.0)) {
        EXPECT_EQ(c, 0.7);
    }
    const std::vector<double> inc{1, -2, 5};
    for (const double c : spline_coefficients(-0.4, inc, 0.0)) {
        EXPECT_EQ(c, -0.4);
    }
    const std::vector<double> steps{1, 2, 3};
    EXPECT_EQ(spline_coefficients(0, steps, 1), (std::vector<double>{1, 3, 6}));
}

TEST(BSplineModel, PredictMatchesFullBasis) {
    BSplineModelSpec spec;
    spec.channels = 3;
    const BSplineModel model(spec);
    ASSERT_EQ(model.coefficient_count(), 14);
    ASSERT_EQ(model.parameter_names().size(), 48U);
    EXPECT_EQ(model.parameter_names()[0], "a0_1");
    EXPECT_EQ(model.parameter_names()[1], "da_1_0");
    EXPECT_EQ(model.parameter_names()[15], "sigma_a_1");

    std::mt19937 rng(5);
    std::normal_distribution<double> n(0, 1);
    std::vector<double> theta(48);
    for (auto& v : theta) {
        v = n(rng);
    }
    std::uniform_real_distribution<double> u(0.0, 2 * std::numbers::pi);
    for (int i = 0; i < 300; ++i) {
        const double x = i < 2 ? (i == 0 ? 0.0 : 2 * std::numbers::pi) : u(rng);
        const int ch = i % 3;
        const auto basis = bspline_basis(x, model.knots(), 3);
        const auto coef = model.coefficients(theta, ch);
        double expected = 0.0;
        for (std::size_t k = 0; k < basis.size(); ++k) {
            expected += basis[k] * coef[k];
        }
        const std::vector<double> in{x};
        ASSERT_NEAR(model.predict(theta, in, ch), expected, 1e-12) << "x = " << x;
    }
}

TEST(BSplineModel, ConstantCoefficientsGiveConstantCurve) {
    const BSplineModel model(BSplineModelSpec{});
    std::vector<double> theta(16, 0.0);
    theta[0] = 0.42;
    theta[15] = 0.1;
    for (const double x : {0.0, 0.3, 3.14, 5.0, 2 * std::numbers::pi}) {
        const std::vector<double> in{x};
        EXPECT_NEAR(model.predict(theta, in, 0), 0.42, 1e-14);
    }
}

TEST(BSplineModel, ContinuousAtKnots) {
    const BSplineModel model(BSplineModelSpec{});
    std::mt19937 rng(9);
    std::normal_distribution<double> n(0, 1);
    std::vector<double> theta(16);
    for (auto& v : theta) {
        v = n(rng);
    }
    const auto& knots = model.knots();
    for (std::size_t k = 4; k + 4 < knots.size(); ++k) {
        const std::vector<double> a{knots[k]};
        const std::vector<double> b{knots[k] + 1e-8};
        const std::vector<double> c{knots[k] - 1e-8};
        EXPECT_LT(std::abs(model.predict(theta, a, 0) - model.predict(theta, b, 0)), 1e-5);
        EXPECT_LT(std::abs(model.predict(theta, a, 0) - model.predict(theta, c, 0)), 1e-5);
    }
}

TEST(Models, PosteriorFiniteOnSupportInterior) {
    std::mt19937 rng(2);
    std::normal_distribution<double> n(0, 1);
    RegressionData data;
    data.inputs.resize(20, 1);
    data.targets.resize(20);
    for (int i = 0; i < 20; ++i) {
        data.inputs(i, 0) = 0.3 * i;
        data.targets(i) = n(rng);
    }
    const auto lin = simple_linear(3.0);
    const std::vector<double> t1{0.5, 0.5};
    EXPECT_TRUE(std::isfinite(log_prior(lin.parameter_names(), t1, lin.priors()) + log_likelihood(lin, t1, data)));

    BSplineModelSpec bs;
    bs.x_hi = 6.0;
    const BSplineModel spline(bs);
    std::vector<double> t2(16, 0.1);
    EXPECT_TRUE(
        std::isfinite(log_prior(spline.parameter_names(), t2, spline.priors()) + log_likelihood(spline, t2, data)));

    LinearModelSpec mv;
    mv.slopes = {{"x", "w", PriorSpec::normal(0, 10)}};
    mv.noise_sd = 1.0;
    const LinearModel multi(mv);
    EXPECT_TRUE(std::isfinite(log_prior(multi.parameter_names(), t1, multi.priors()) + log_likelihood(multi, t1, data)));
}
