#pragma once

// Parametric regression models: (multivariate) linear regression and
// per-channel cubic B-spline regression with the cumulative-increment
// coefficient parameterization a_k = a0 + sigma_a * sum_{i<=k} da_i.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rulebayes/error.hpp"
#include "rulebayes/priors.hpp"
#include "rulebayes/rule_engine.hpp"

namespace rulebayes {

/// Inputs (one row per observation, one column per model input), targets and
/// an optional 0-based output channel per row.
struct RegressionData {
    Eigen::MatrixXd inputs;
    Eigen::VectorXd targets;
    std::vector<int> channels;

    [[nodiscard]] Eigen::Index rows() const noexcept { return targets.size(); }
    [[nodiscard]] int channel(Eigen::Index row) const {
        return channels.empty() ? 0 : channels[static_cast<std::size_t>(row)];
    }
};

class RegressionModel {
public:
    virtual ~RegressionModel() = default;

    [[nodiscard]] virtual const std::vector<std::string>& parameter_names() const = 0;
    [[nodiscard]] virtual const std::vector<std::string>& input_names() const = 0;
    [[nodiscard]] virtual int output_channels() const { return 1; }
    [[nodiscard]] virtual const PriorMap& priors() const = 0;

    [[nodiscard]] virtual double predict(std::span<const double> params, std::span<const double> inputs,
                                         int channel) const = 0;

    /// Observation noise standard deviation under `params`.
    [[nodiscard]] virtual double noise_sd(std::span<const double> params) const = 0;
};

namespace detail {

inline double normal_log_pdf(double residual, double sd) {
    return -0.5 * (residual / sd) * (residual / sd) - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

} // namespace detail

/// sum_i log N(y_i; predict(params, x_i), sigma^2).
inline double log_likelihood(const RegressionModel& model, std::span<const double> params,
                             const RegressionData& data) {
    const auto n_inputs = static_cast<Eigen::Index>(model.input_names().size());
    if (data.inputs.rows() != data.targets.size() || (data.rows() > 0 && data.inputs.cols() != n_inputs)) {
        throw ValidationError("log_likelihood: data dimensions do not match the model");
    }
    if (!data.channels.empty() && static_cast<Eigen::Index>(data.channels.size()) != data.rows()) {
        throw ValidationError("log_likelihood: channel vector length differs from the row count");
    }
    if (params.size() != model.parameter_names().size()) {
        throw ValidationError("log_likelihood: expected " + std::to_string(model.parameter_names().size()) +
                              " parameters, got " + std::to_string(params.size()));
    }
    const double sd = model.noise_sd(params);
    if (!(sd > 0.0)) {
        return -std::numeric_limits<double>::infinity();
    }
    double total = 0.0;
    std::vector<double> row(static_cast<std::size_t>(n_inputs));
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        for (Eigen::Index j = 0; j < n_inputs; ++j) {
            row[static_cast<std::size_t>(j)] = data.inputs(i, j);
        }
        total += detail::normal_log_pdf(data.targets(i) - model.predict(params, row, data.channel(i)), sd);
    }
    return total;
}

// ---------------------------------------------------------------------------
// Linear regression
// ---------------------------------------------------------------------------

struct LinearTerm {
    std::string feature; // input column
    std::string name;    // coefficient parameter
    PriorSpec prior = PriorSpec::normal(0.0, 1.0);
};

struct LinearModelSpec {
    std::string intercept_name = "alpha";
    PriorSpec intercept_prior = PriorSpec::normal(0.0, 1.0);
    std::vector<LinearTerm> slopes;
    double noise_sd = 1.0;
    /// When set, the noise scale becomes a parameter named "sigma".
    std::optional<PriorSpec> noise_prior;
};

/// y = intercept + sum_j slope_j * x_j + N(0, sigma^2).
class LinearModel final : public RegressionModel {
public:
    explicit LinearModel(LinearModelSpec spec) : spec_(std::move(spec)) {
        if (spec_.slopes.empty()) {
            throw ValidationError("linear model needs at least one slope");
        }
        if (!spec_.noise_prior && !(spec_.noise_sd > 0.0)) {
            throw ValidationError("linear model noise sigma must be positive");
        }
        names_.push_back(spec_.intercept_name);
        priors_.emplace(spec_.intercept_name, spec_.intercept_prior);
        for (const auto& s : spec_.slopes) {
            names_.push_back(s.name);
            inputs_.push_back(s.feature);
            priors_.emplace(s.name, s.prior);
        }
        if (spec_.noise_prior) {
            names_.emplace_back("sigma");
            priors_.emplace("sigma", *spec_.noise_prior);
        }
        if (priors_.size() != names_.size()) {
            throw ValidationError("linear model parameter names must be unique");
        }
    }

    [[nodiscard]] const std::vector<std::string>& parameter_names() const override { return names_; }
    [[nodiscard]] const std::vector<std::string>& input_names() const override { return inputs_; }
    [[nodiscard]] const PriorMap& priors() const override { return priors_; }
    [[nodiscard]] const LinearModelSpec& spec() const noexcept { return spec_; }

    [[nodiscard]] double predict(std::span<const double> params, std::span<const double> inputs,
                                 int /*channel*/) const override {
        double y = params[0];
        for (std::size_t j = 0; j < inputs_.size(); ++j) {
            y += params[j + 1] * inputs[j];
        }
        return y;
    }

    [[nodiscard]] double noise_sd(std::span<const double> params) const override {
        return spec_.noise_prior ? params[names_.size() - 1] : spec_.noise_sd;
    }

private:
    LinearModelSpec spec_;
    std::vector<std::string> names_;
    std::vector<std::string> inputs_;
    PriorMap priors_;
};

// ---------------------------------------------------------------------------
// B-splines
// ---------------------------------------------------------------------------

/// Clamped knot vector: degree+1 copies of each boundary and `interior`
/// equally spaced interior knots.
inline std::vector<double> clamped_knots(double lo, double hi, int interior, int degree) {
    if (!(hi > lo) || interior < 0 || degree < 0) {
        throw ValidationError("clamped_knots: need lo < hi, interior >= 0, degree >= 0");
    }
    std::vector<double> knots(static_cast<std::size_t>(degree + 1), lo);
    for (int i = 1; i <= interior; ++i) {
        knots.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(interior + 1));
    }
    knots.insert(knots.end(), static_cast<std::size_t>(degree + 1), hi);
    return knots;
}

/// All B-spline basis values at x by the Cox-de Boor recursion. The right end
/// of the knot range belongs to the last non-degenerate span.
inline std::vector<double> bspline_basis(double x, std::span<const double> knots, int degree) {
    const std::size_t m = knots.size();
    if (degree < 0 || m < static_cast<std::size_t>(degree) + 2) {
        throw ValidationError("bspline_basis: knot vector too short for the degree");
    }
    if (!(x >= knots.front() && x <= knots.back())) {
        throw ValidationError("bspline_basis: x outside the knot range");
    }
    const std::size_t n_basis = m - static_cast<std::size_t>(degree) - 1;

    // Degree 0: indicators of the half-open spans.
    std::vector<double> level(m - 1, 0.0);
    std::size_t last_span = 0;
    for (std::size_t i = 0; i + 1 < m; ++i) {
        if (knots[i] < knots[i + 1]) {
            last_span = i;
        }
    }
    for (std::size_t i = 0; i + 1 < m; ++i) {
        if (knots[i] <= x && x < knots[i + 1]) {
            level[i] = 1.0;
        }
    }
    if (x == knots.back()) {
        level[last_span] = 1.0;
    }
    for (int k = 1; k <= degree; ++k) {
        std::vector<double> up(m - 1 - static_cast<std::size_t>(k), 0.0);
        for (std::size_t i = 0; i < up.size(); ++i) {
            double v = 0.0;
            const double d1 = knots[i + static_cast<std::size_t>(k)] - knots[i];
            const double d2 = knots[i + static_cast<std::size_t>(k) + 1] - knots[i + 1];
            if (d1 > 0.0) {
                v += (x - knots[i]) / d1 * level[i];
            }
            if (d2 > 0.0) {
                v += (knots[i + static_cast<std::size_t>(k) + 1] - x) / d2 * level[i + 1];
            }
            up[i] = v;
        }
        level = std::move(up);
    }
    level.resize(n_basis);
    return level;
}

/// a_k = a0 + sigma_a * sum_{i=0}^{k} da_i.
inline std::vector<double> spline_coefficients(double a0, std::span<const double> increments, double sigma_a) {
    std::vector<double> coef(increments.size());
    double cumulative = 0.0;
    for (std::size_t k = 0; k < increments.size(); ++k) {
        cumulative += increments[k];
        coef[k] = a0 + sigma_a * cumulative;
    }
    return coef;
}

struct BSplineModelSpec {
    int degree = 3;
    int interior_knots = 10;
    double x_lo = 0.0;
    double x_hi = 2.0 * std::numbers::pi;
    int channels = 1;
    std::string input = "x";
    PriorSpec a0_prior = PriorSpec::normal(0.0, 0.1);
    PriorSpec increment_prior = PriorSpec::normal(0.0, 5.0);
    PriorSpec scale_prior = PriorSpec::half_cauchy(0.1);
    double noise_sd = 0.002;
};

/// One independent spline curve per channel. Parameter block of channel j
/// (1-based): a0_j, da_j_0 .. da_j_{K-1}, sigma_a_j.
class BSplineModel final : public RegressionModel {
public:
    explicit BSplineModel(BSplineModelSpec spec) : spec_(std::move(spec)) {
        if (spec_.degree < 0 || spec_.channels < 1 || !(spec_.noise_sd > 0.0)) {
            throw ValidationError("invalid B-spline model specification");
        }
        knots_ = clamped_knots(spec_.x_lo, spec_.x_hi, spec_.interior_knots, spec_.degree);
        n_coef_ = static_cast<int>(knots_.size()) - spec_.degree - 1;
        inputs_.push_back(spec_.input);
        for (int j = 1; j <= spec_.channels; ++j) {
            const std::string suffix = "_" + std::to_string(j);
            names_.push_back("a0" + suffix);
            priors_.emplace(names_.back(), spec_.a0_prior);
            for (int k = 0; k < n_coef_; ++k) {
                names_.push_back("da" + suffix + "_" + std::to_string(k));
                priors_.emplace(names_.back(), spec_.increment_prior);
            }
            names_.push_back("sigma_a" + suffix);
            priors_.emplace(names_.back(), spec_.scale_prior);
        }
    }

    [[nodiscard]] const std::vector<std::string>& parameter_names() const override { return names_; }
    [[nodiscard]] const std::vector<std::string>& input_names() const override { return inputs_; }
    [[nodiscard]] int output_channels() const override { return spec_.channels; }
    [[nodiscard]] const PriorMap& priors() const override { return priors_; }
    [[nodiscard]] const std::vector<double>& knots() const noexcept { return knots_; }
    [[nodiscard]] int coefficient_count() const noexcept { return n_coef_; }
    [[nodiscard]] const BSplineModelSpec& spec() const noexcept { return spec_; }

    [[nodiscard]] double noise_sd(std::span<const double>) const override { return spec_.noise_sd; }

    /// Coefficients of one channel (0-based).
    [[nodiscard]] std::vector<double> coefficients(std::span<const double> params, int channel) const {
        const auto block = params.subspan(static_cast<std::size_t>(channel) * block_size(), block_size());
        return spline_coefficients(block[0], block.subspan(1, static_cast<std::size_t>(n_coef_)),
                                   block[block_size() - 1]);
    }

    [[nodiscard]] double predict(std::span<const double> params, std::span<const double> inputs,
                                 int channel) const override {
        if (channel < 0 || channel >= spec_.channels) {
            throw ValidationError("spline channel out of range");
        }
        const double x = inputs[0];
        const int p = spec_.degree;
        std::array<double, 16> basis{};
        if (p + 1 > static_cast<int>(basis.size())) {
            throw ValidationError("spline degree too large");
        }
        const int span = find_span(x);
        nonzero_basis(x, span, basis);

        const auto block = params.subspan(static_cast<std::size_t>(channel) * block_size(), block_size());
        const double a0 = block[0];
        const double sigma_a = block[block_size() - 1];
        // Coefficients span-p .. span need the increment prefix sums up to span.
        double prefix = 0.0;
        for (int k = 0; k < span - p; ++k) {
            prefix += block[1 + static_cast<std::size_t>(k)];
        }
        double y = 0.0;
        for (int r = 0; r <= p; ++r) {
            prefix += block[1 + static_cast<std::size_t>(span - p + r)];
            y += basis[static_cast<std::size_t>(r)] * (a0 + sigma_a * prefix);
        }
        return y;
    }

private:
    [[nodiscard]] std::size_t block_size() const noexcept { return static_cast<std::size_t>(n_coef_) + 2; }

    [[nodiscard]] int find_span(double x) const {
        const int p = spec_.degree;
        if (!(x >= knots_.front() && x <= knots_.back())) {
            throw ValidationError("spline evaluated outside the knot range");
        }
        if (x >= knots_[static_cast<std::size_t>(n_coef_)]) {
            return n_coef_ - 1;
        }
        const auto it = std::upper_bound(knots_.begin() + p, knots_.begin() + n_coef_ + 1, x);
        return static_cast<int>(it - knots_.begin()) - 1;
    }

    // Nonzero basis functions N_{span-p..span} (triangular scheme).
    void nonzero_basis(double x, int span, std::array<double, 16>& out) const {
        const int p = spec_.degree;
        std::array<double, 16> left{};
        std::array<double, 16> right{};
        out[0] = 1.0;
        for (int j = 1; j <= p; ++j) {
            left[static_cast<std::size_t>(j)] = x - knots_[static_cast<std::size_t>(span + 1 - j)];
            right[static_cast<std::size_t>(j)] = knots_[static_cast<std::size_t>(span + j)] - x;
            double saved = 0.0;
            for (int r = 0; r < j; ++r) {
                const double temp = out[static_cast<std::size_t>(r)] /
                                    (right[static_cast<std::size_t>(r + 1)] + left[static_cast<std::size_t>(j - r)]);
                out[static_cast<std::size_t>(r)] = saved + right[static_cast<std::size_t>(r + 1)] * temp;
                saved = left[static_cast<std::size_t>(j - r)] * temp;
            }
            out[static_cast<std::size_t>(j)] = saved;
        }
    }

    BSplineModelSpec spec_;
    std::vector<double> knots_;
    int n_coef_ = 0;
    std::vector<std::string> names_;
    std::vector<std::string> inputs_;
    PriorMap priors_;
};

// ---------------------------------------------------------------------------
// Rule-facing adapter
// ---------------------------------------------------------------------------

/// Presents a model at fixed parameter values to the rule engine. Inputs a
/// rule does not discretize take `defaults` (e.g. training-data means).
class ModelPredictor final : public Predictor {
public:
    ModelPredictor(const RegressionModel& model, std::span<const double> params, std::span<const double> defaults)
        : model_(model), params_(params), defaults_(defaults) {}

    [[nodiscard]] double output(std::span<const double> inputs, int channel) const override {
        return model_.predict(params_, inputs, channel);
    }
    [[nodiscard]] std::span<const double> input_defaults() const override { return defaults_; }

private:
    const RegressionModel& model_;
    std::span<const double> params_;
    std::span<const double> defaults_;
};

/// Variable table seen by rule bases written against `model`.
inline VariableTable model_variables(const RegressionModel& model, const std::string& output_name,
                                     std::vector<std::string> parameters = {}) {
    VariableTable vars;
    vars.inputs = model.input_names();
    vars.outputs.push_back(OutputDecl{output_name, model.output_channels()});
    vars.parameters = std::move(parameters);
    return vars;
}

} // namespace rulebayes
