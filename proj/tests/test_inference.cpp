#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

#include "rulebayes/data.hpp"
#include "rulebayes/inference.hpp"
#include "rulebayes/rule_parser.hpp"

using namespace rulebayes;

namespace {

double std_normal(std::span<const double> x) { return -0.5 * x[0] * x[0]; }

SamplerConfig one_chain(int iterations, double step, std::uint64_t seed = 17) {
    SamplerConfig cfg;
    cfg.iterations = iterations;
    cfg.burn_in = 100;
    cfg.chains = 1;
    cfg.proposal_sd = {step};
    cfg.seed = seed;
    return cfg;
}

struct LinregSetup {
    LinearModel model;
    RegressionData data;
    VariableTable vars;

    LinregSetup() : model(make_model()) {
        const auto gen = gen_linear(1);
        data.inputs = gen.observed.values.col(0);
        data.targets = gen.observed.values.col(1);
        vars.inputs = {"x"};
        vars.outputs = {{"y", 1}};
    }

    static LinearModel make_model() {
        LinearModelSpec spec;
        spec.intercept_prior = PriorSpec::normal(0.5, 0.5);
        spec.slopes = {{"x", "beta", PriorSpec::normal(0.5, 0.5)}};
        spec.noise_sd = 3.0;
        return LinearModel(spec);
    }
};

const char* kStrictRules = R"(
RULE r1: IF x >= 0 AND x <= 1 THEN y >= 0 AND y <= 4 DISCRETIZE x: linspace(0, 1, 20)
RULE r2: IF x >= 9 AND x <= 10 THEN y >= 18 AND y <= 22 DISCRETIZE x: linspace(9, 10, 20)
COMPOSE r1 AND r2
)";

const char* kHyperRules = R"(
RULE r1: IF x >= 0 AND x <= x_low THEN y <= y_low DISCRETIZE x: linspace(0, x_low, 20)
RULE r2: IF x >= x_high AND x <= 10 THEN y >= y_high DISCRETIZE x: linspace(x_high, 10, 20)
COMPOSE r1 AND r2
)";

} // namespace

TEST(MetropolisHastings, StandardNormalTarget) {
    const std::vector<double> init{0.0};
    const auto ps = metropolis_hastings(std_normal, init, one_chain(50000, 1.0));
    const auto s = posterior_summary(ps);
    EXPECT_NEAR(s[0].mean, 0.0, 0.05);
    EXPECT_NEAR(s[0].sd, 1.0, 0.05);
    EXPECT_GT(ps.acceptance[0], 0.0);
    EXPECT_LE(ps.acceptance[0], 1.0);
}

TEST(MetropolisHastings, SameSeedIsBitIdentical) {
    SamplerConfig cfg = one_chain(3000, 0.8, 99);
    cfg.chains = 3;
    cfg.thin = 7;
    const std::vector<double> init{1.5};
    const auto a = metropolis_hastings(std_normal, init, cfg);
    const auto b = metropolis_hastings(std_normal, init, cfg);
    ASSERT_EQ(a.draws.size(), 3U);
    for (std::size_t c = 0; c < 3; ++c) {
        ASSERT_EQ(a.draws[c].rows(), b.draws[c].rows());
        EXPECT_EQ(0, std::memcmp(a.draws[c].data(), b.draws[c].data(), sizeof(double) * a.draws[c].size()));
    }
    EXPECT_EQ(a.acceptance, b.acceptance);
    cfg.parallel = true;
    const auto threaded = metropolis_hastings(std_normal, init, cfg);
    for (std::size_t c = 0; c < 3; ++c) {
        EXPECT_TRUE(threaded.draws[c] == a.draws[c]);
    }
    EXPECT_NE(a.seeds[0], a.seeds[1]);
    EXPECT_FALSE(a.draws[0] == a.draws[1]);
}

TEST(MetropolisHastings, BurnInAndThinningAtRetention) {
    SamplerConfig cfg = one_chain(1000, 1.0);
    cfg.burn_in = 100;
    cfg.thin = 10;
    const std::vector<double> init{0.0};
    const auto ps = metropolis_hastings(std_normal, init, cfg);
    EXPECT_EQ(ps.draws[0].rows(), 90);

    cfg.thin = 1;
    const auto all = metropolis_hastings(std_normal, init, cfg);
    ASSERT_EQ(all.draws[0].rows(), 900);
    for (Eigen::Index i = 0; i < 90; ++i) {
        EXPECT_EQ(ps.draws[0](i, 0), all.draws[0](10 * i, 0));
    }
}

TEST(MetropolisHastings, ConfigValidation) {
    const std::vector<double> init{0.0};
    SamplerConfig cfg = one_chain(100, 1.0);
    cfg.burn_in = 100;
    EXPECT_THROW((void)metropolis_hastings(std_normal, init, cfg), ConfigError);
    cfg = one_chain(100, 1.0);
    cfg.thin = 0;
    EXPECT_THROW((void)metropolis_hastings(std_normal, init, cfg), ConfigError);
    cfg = one_chain(100, -1.0);
    EXPECT_THROW((void)metropolis_hastings(std_normal, init, cfg), ConfigError);
}

TEST(MetropolisHastings, NanTargetIsAnError) {
    const std::vector<double> init{0.0};
    const LogTarget nan_target = [](std::span<const double> x) {
        return x[0] > 0.5 ? std::numeric_limits<double>::quiet_NaN() : 0.0;
    };
    EXPECT_THROW((void)metropolis_hastings(nan_target, init, one_chain(2000, 1.0)), NumericalError);
}

TEST(MetropolisHastings, EscapesFromMinusInfinityStart) {
    // Support is x > 3; the chain starts outside it.
    const LogTarget target = [](std::span<const double> x) {
        return x[0] > 3 ? -0.5 * (x[0] - 4) * (x[0] - 4) : -std::numeric_limits<double>::infinity();
    };
    const std::vector<double> init{0.0};
    SamplerConfig cfg = one_chain(20000, 1.0);
    cfg.burn_in = 2000;
    const auto ps = metropolis_hastings(target, init, cfg);
    EXPECT_GT(ps.pooled().col(0).minCoeff(), 3.0);
}

TEST(MetropolisHastings, AdaptationRecoversCorrelatedGaussian) {
    // Correlation 0.95 and a proposal a hundred times too small.
    const double rho = 0.95;
    const LogTarget target = [rho](std::span<const double> x) {
        const double q = (x[0] * x[0] - 2 * rho * x[0] * x[1] + x[1] * x[1]) / (1 - rho * rho);
        return -0.5 * q;
    };
    SamplerConfig cfg;
    cfg.iterations = 60000;
    cfg.burn_in = 20000;
    cfg.chains = 1;
    cfg.proposal_sd = {0.01, 0.01};
    cfg.adapt = true;
    cfg.seed = 8;
    const std::vector<double> init{0.0, 0.0};
    const auto ps = metropolis_hastings(target, init, cfg);
    const Eigen::MatrixXd d = ps.pooled();
    const Eigen::RowVectorXd m = d.colwise().mean();
    const Eigen::MatrixXd c = d.rowwise() - m;
    const Eigen::Matrix2d cov = c.transpose() * c / static_cast<double>(d.rows() - 1);
    EXPECT_NEAR(m[0], 0.0, 0.1);
    EXPECT_NEAR(m[1], 0.0, 0.1);
    EXPECT_NEAR(cov(0, 0), 1.0, 0.1);
    EXPECT_NEAR(cov(1, 1), 1.0, 0.1);
    EXPECT_NEAR(cov(0, 1), rho, 0.1);
    EXPECT_GT(ps.acceptance[0], 0.1);
    EXPECT_LT(ps.acceptance[0], 0.6);
}

TEST(MetropolisHastings, AdaptiveRunsAreBitIdentical) {
    SamplerConfig cfg = one_chain(5000, 0.05, 3);
    cfg.burn_in = 2000;
    cfg.chains = 2;
    cfg.adapt = true;
    cfg.adapt_window = 100;
    const std::vector<double> init{2.0};
    const auto a = metropolis_hastings(std_normal, init, cfg);
    cfg.parallel = true;
    const auto b = metropolis_hastings(std_normal, init, cfg);
    for (std::size_t c = 0; c < 2; ++c) {
        EXPECT_TRUE(a.draws[c] == b.draws[c]);
    }
    cfg.adapt_window = 0;
    EXPECT_THROW((void)metropolis_hastings(std_normal, init, cfg), ConfigError);
}

TEST(PosteriorSummary, Examples) {
    PosteriorSamples ps;
    ps.names = {"c"};
    ps.draws.emplace_back(Eigen::MatrixXd::Constant(5, 1, 2.5));
    auto s = posterior_summary(ps);
    EXPECT_EQ(s[0].mean, 2.5);
    EXPECT_EQ(s[0].sd, 0.0);

    ps.draws.clear();
    Eigen::MatrixXd a(2, 1);
    a << 1, 2;
    Eigen::MatrixXd b(1, 1);
    b << 3;
    ps.draws = {a, b};
    s = posterior_summary(ps);
    EXPECT_DOUBLE_EQ(s[0].mean, 2.0);
    EXPECT_DOUBLE_EQ(s[0].sd, 1.0);

    ps.draws = {b};
    EXPECT_THROW((void)posterior_summary(ps), ValidationError);
}

TEST(RuleLogPosterior, UniformConfidenceEqualsNoRules) {
    const LinregSetup s;
    const auto rb = parse_rule_base(kStrictRules, s.vars);
    for (const double b : {-3.0, 0.0, 1.9, 2.0, 7.5}) {
        const std::vector<double> theta{0.3 * b, b};
        EXPECT_EQ(rule_log_posterior(s.model, s.data, &rb, ConfidenceSpec{}, {}, theta),
                  rule_log_posterior(s.model, s.data, nullptr, ConfidenceSpec{}, {}, theta));
    }
}

TEST(RuleLogPosterior, StrictRulesAtTrueLineAddLog100) {
    const LinregSetup s;
    const auto rb = parse_rule_base(kStrictRules, s.vars);
    const std::vector<double> theta{1.0, 2.0};
    const double plain = rule_log_posterior(s.model, s.data, nullptr, ConfidenceSpec{}, {}, theta);
    const std::vector<std::string> names{"alpha", "beta"};
    const RegressionModel& m = s.model;
    const double manual = log_prior(names, theta, m.priors()) + log_likelihood(m, theta, s.data);
    EXPECT_EQ(plain, manual);
    EXPECT_NEAR(rule_log_posterior(s.model, s.data, &rb, ConfidenceSpec(1, 100), {}, theta), plain + std::log(100.0),
                1e-9);
}

TEST(RuleLogPosterior, HyperparameterRules) {
    const LinregSetup s;
    VariableTable vars = s.vars;
    vars.parameters = {"x_low", "x_high", "y_low", "y_high"};
    const auto rb = parse_rule_base(kHyperRules, vars);
    const PriorMap hyper{{"x_low", PriorSpec::normal(1.5, 0.5)},
                         {"x_high", PriorSpec::normal(8.5, 0.5)},
                         {"y_low", PriorSpec::normal(4.5, 0.5)},
                         {"y_high", PriorSpec::normal(18.5, 0.5)}};
    const RulePosterior post(s.model, s.data, &rb, ConfidenceSpec(1, 100), hyper);
    // State order: model parameters, then hyperparameters in name order.
    ASSERT_EQ(post.names(), (std::vector<std::string>{"alpha", "beta", "x_high", "x_low", "y_high", "y_low"}));
    const std::vector<double> at_means{1.0, 2.0, 8.5, 1.5, 18.5, 4.5};
    EXPECT_TRUE(std::isfinite(post(at_means)));
    std::vector<double> bad = at_means;
    bad[5] = -1e6;
    bad[1] = 0.0;
    bad[0] = 0.0;
    // y = 0 violates y <= -1e6 everywhere on r1 and y >= 18.5 everywhere on r2.
    EXPECT_EQ(post(bad), -std::numeric_limits<double>::infinity());
}

TEST(RuleLogPosterior, UnresolvedHyperparameterIsAnError) {
    const LinregSetup s;
    VariableTable vars = s.vars;
    vars.parameters = {"x_low", "x_high", "y_low", "y_high"};
    const auto rb = parse_rule_base(kHyperRules, vars);
    const PriorMap partial{{"x_low", PriorSpec::normal(1.5, 0.5)}};
    EXPECT_THROW(RulePosterior(s.model, s.data, &rb, ConfidenceSpec(1, 100), partial), ValidationError);
    // Constants can stand in for hyperparameters.
    const std::map<std::string, double> constants{{"x_high", 8.5}, {"y_low", 4.5}, {"y_high", 18.5}};
    const RulePosterior post(s.model, s.data, &rb, ConfidenceSpec(1, 100), partial, constants);
    const std::vector<double> state{1.0, 2.0, 1.5};
    EXPECT_TRUE(std::isfinite(post(state)));
}

TEST(MetropolisHastings, UniformConfidenceChainsMatchNoRuleChains) {
    const LinregSetup s;
    const auto rb = parse_rule_base(kStrictRules, s.vars);
    const RulePosterior with(s.model, s.data, &rb, ConfidenceSpec{});
    const RulePosterior without(s.model, s.data, nullptr, ConfidenceSpec{});
    SamplerConfig cfg;
    cfg.iterations = 4000;
    cfg.burn_in = 500;
    cfg.chains = 2;
    cfg.proposal_sd = {0.3, 0.1};
    const std::vector<double> init{0.5, 0.5};
    const auto a = metropolis_hastings(std::cref(with), init, cfg, with.names());
    const auto b = metropolis_hastings(std::cref(without), init, cfg, without.names());
    for (std::size_t c = 0; c < 2; ++c) {
        EXPECT_TRUE(a.draws[c] == b.draws[c]);
    }
}

TEST(MetropolisHastings, AcceptanceIgnoresEvidenceConstant) {
    const std::vector<double> init{0.0};
    const LogTarget shifted = [](std::span<const double> x) { return -0.5 * x[0] * x[0] + 1234.5; };
    const auto a = metropolis_hastings(std_normal, init, one_chain(5000, 1.0));
    const auto b = metropolis_hastings(shifted, init, one_chain(5000, 1.0));
    // Differences of log targets are unchanged up to rounding of the offset.
    Eigen::Index differing = 0;
    for (Eigen::Index i = 0; i < a.draws[0].rows(); ++i) {
        differing += a.draws[0](i, 0) != b.draws[0](i, 0) ? 1 : 0;
    }
    EXPECT_LE(differing, a.draws[0].rows() / 100);
}
