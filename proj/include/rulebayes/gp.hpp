#pragma once

// Gaussian-process regression with a Matern-3/2 ARD kernel, the rule-penalized
// pseudo-marginal likelihood and MAP fitting of the kernel hyperparameters.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rulebayes/confidence.hpp"
#include "rulebayes/error.hpp"
#include "rulebayes/field.hpp"
#include "rulebayes/optim.hpp"
#include "rulebayes/penalty.hpp"
#include "rulebayes/priors.hpp"
#include "rulebayes/rule_engine.hpp"

namespace rulebayes {

struct KernelHyper {
    double zeta = 1.0;      // signal amplitude
    Eigen::VectorXd length; // one length-scale per input dimension
    double noise = 0.1;     // observation noise sd

    void validate(Eigen::Index dimension) const {
        if (length.size() != dimension) {
            throw ValidationError("kernel has " + std::to_string(length.size()) + " length-scales for " +
                                  std::to_string(dimension) + " input dimensions");
        }
        if (!(zeta > 0.0) || !(noise >= 0.0) || !(length.array() > 0.0).all()) {
            throw ValidationError("kernel hyperparameters must be positive");
        }
    }
};

/// zeta^2 (1 + d) exp(-d), d = sqrt(sum_j 3 (x_j - x'_j)^2 / l_j^2).
template <typename A, typename B>
double matern32_ard(const A& x, const B& xp, const KernelHyper& h) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < h.length.size(); ++j) {
        const double r = (x[j] - xp[j]) / h.length[j];
        s += 3.0 * r * r;
    }
    const double d = std::sqrt(s);
    return h.zeta * h.zeta * (1.0 + d) * std::exp(-d);
}

/// Cross-covariance between the rows of a and b.
inline Eigen::MatrixXd gram(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const KernelHyper& h) {
    Eigen::MatrixXd k(a.rows(), b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < b.rows(); ++j) {
            k(i, j) = matern32_ard(a.row(i), b.row(j), h);
        }
    }
    return k;
}

/// Symmetric Gram matrix of one input set (upper triangle mirrored exactly).
inline Eigen::MatrixXd gram(const Eigen::MatrixXd& a, const KernelHyper& h) {
    Eigen::MatrixXd k(a.rows(), a.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        k(i, i) = h.zeta * h.zeta;
        for (Eigen::Index j = i + 1; j < a.rows(); ++j) {
            k(i, j) = matern32_ard(a.row(i), a.row(j), h);
            k(j, i) = k(i, j);
        }
    }
    return k;
}

struct Predictive {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;
};

/// Training data, hyperparameters and the Cholesky factor of K + sigma_n^2 I.
/// On factorization failure the diagonal gets 1e-10 zeta^2 extra, escalating
/// tenfold up to 1e-4 zeta^2.
class GpState {
public:
    GpState(Eigen::MatrixXd x, Eigen::VectorXd y, KernelHyper hyper)
        : x_(std::move(x)), y_(std::move(y)), hyper_(std::move(hyper)) {
        if (x_.rows() < 1 || x_.rows() != y_.size()) {
            throw ValidationError("GP needs n >= 1 training rows matching the targets");
        }
        hyper_.validate(x_.cols());
        Eigen::MatrixXd k = gram(x_, hyper_);
        k.diagonal().array() += hyper_.noise * hyper_.noise;
        const double z2 = hyper_.zeta * hyper_.zeta;
        llt_.compute(k);
        for (double extra = 1e-10 * z2; llt_.info() != Eigen::Success; extra *= 10.0) {
            if (!(extra > 0.0) || extra > 1e-4 * z2 * (1.0 + 1e-9)) {
                throw NumericalError("GP covariance is not positive definite after maximum jitter");
            }
            Eigen::MatrixXd kj = k;
            kj.diagonal().array() += extra;
            llt_.compute(kj);
            jitter_ = extra;
        }
        alpha_ = llt_.solve(y_);
        log_det_ = 2.0 * llt_.matrixL().toDenseMatrix().diagonal().array().log().sum();
    }

    [[nodiscard]] const Eigen::MatrixXd& inputs() const noexcept { return x_; }
    [[nodiscard]] const Eigen::VectorXd& targets() const noexcept { return y_; }
    [[nodiscard]] const KernelHyper& hyper() const noexcept { return hyper_; }
    [[nodiscard]] double jitter() const noexcept { return jitter_; }

    /// log N(y; 0, K + sigma_n^2 I).
    [[nodiscard]] double log_marginal() const {
        const auto n = static_cast<double>(y_.size());
        return -0.5 * y_.dot(alpha_) - 0.5 * log_det_ - 0.5 * n * std::log(2.0 * std::numbers::pi);
    }

    /// Posterior mean at one input point.
    [[nodiscard]] double mean_at(std::span<const double> point) const {
        double m = 0.0;
        for (Eigen::Index i = 0; i < x_.rows(); ++i) {
            m += matern32_ard(x_.row(i), point, hyper_) * alpha_[i];
        }
        return m;
    }

    [[nodiscard]] Eigen::VectorXd mean(const Eigen::MatrixXd& xs) const { return gram(xs, x_, hyper_) * alpha_; }

    /// Predictive mean and variance of new observations (noise included).
    [[nodiscard]] Predictive predict(const Eigen::MatrixXd& xs) const {
        const Eigen::MatrixXd ks = gram(x_, xs, hyper_);
        Predictive p;
        p.mean = ks.transpose() * alpha_;
        const Eigen::MatrixXd v = llt_.matrixL().solve(ks);
        const double prior = hyper_.zeta * hyper_.zeta + hyper_.noise * hyper_.noise;
        p.variance = (prior - v.colwise().squaredNorm().transpose().array()).max(0.0);
        return p;
    }

private:
    Eigen::MatrixXd x_;
    Eigen::VectorXd y_;
    KernelHyper hyper_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    Eigen::VectorXd alpha_;
    double log_det_ = 0.0;
    double jitter_ = 0.0;
};

inline double log_marginal_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KernelHyper& h) {
    return GpState(x, y, h).log_marginal();
}

inline Predictive predictive(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::MatrixXd& xs,
                             const KernelHyper& h) {
    return GpState(x, y, h).predict(xs);
}

// ---------------------------------------------------------------------------
// Blob-center path
// ---------------------------------------------------------------------------

/// Piecewise-linear path through per-snapshot argmax locations, clamped
/// outside the snapshot time range.
struct BlobPath {
    std::vector<double> times;
    std::vector<double> xs;
    std::vector<double> ys;

    [[nodiscard]] std::pair<double, double> at(double t) const {
        if (t <= times.front()) {
            return {xs.front(), ys.front()};
        }
        if (t >= times.back()) {
            return {xs.back(), ys.back()};
        }
        const auto k = static_cast<std::size_t>(std::upper_bound(times.begin(), times.end(), t) - times.begin());
        const double w = (t - times[k - 1]) / (times[k] - times[k - 1]);
        return {xs[k - 1] + w * (xs[k] - xs[k - 1]), ys[k - 1] + w * (ys[k] - ys[k - 1])};
    }
};

inline BlobPath blob_center_path(std::vector<FieldSnapshot> snapshots, const SpatialGrid& grid) {
    if (snapshots.size() < 2) {
        throw ValidationError("blob path needs at least two snapshots");
    }
    std::stable_sort(snapshots.begin(), snapshots.end(),
                     [](const FieldSnapshot& a, const FieldSnapshot& b) { return a.time < b.time; });
    BlobPath path;
    for (const auto& s : snapshots) {
        if (!path.times.empty() && !(s.time > path.times.back())) {
            throw ValidationError("blob path snapshots need distinct times");
        }
        const auto [i, j] = s.argmax();
        path.times.push_back(s.time);
        path.xs.push_back(grid.coord(i));
        path.ys.push_back(grid.coord(j));
    }
    return path;
}

// ---------------------------------------------------------------------------
// Rules on GP predictions
// ---------------------------------------------------------------------------

/// What the rules need beyond the GP itself. Model inputs are (x, y, t).
struct GpRuleContext {
    SpatialGrid grid;
    BlobPath path;
    int radius = 1; // gridmax window half-width in nodes
    std::vector<double> input_defaults;
    std::vector<double> rule_parameters;
};

/// Predictive mean seen through the rule engine. gridmax(t) is the maximum
/// mean over the (2r+1)^2 nodes around the path position at t.
class GpPredictor final : public Predictor {
public:
    GpPredictor(const GpState& state, const GpRuleContext& ctx) : state_(state), ctx_(ctx) {
        if (ctx_.input_defaults.size() != static_cast<std::size_t>(state_.inputs().cols())) {
            throw ValidationError("GP rule context defaults do not match the input dimension");
        }
    }

    [[nodiscard]] double output(std::span<const double> inputs, int /*channel*/) const override {
        return state_.mean_at(inputs);
    }
    [[nodiscard]] std::span<const double> input_defaults() const override { return ctx_.input_defaults; }

    [[nodiscard]] double grid_max(double t) const override {
        if (ctx_.path.times.empty()) {
            throw EvaluationError("gridmax needs a blob-center path");
        }
        const auto [cx, cy] = ctx_.path.at(t);
        const int ci = ctx_.grid.nearest(cx);
        const int cj = ctx_.grid.nearest(cy);
        double best = -std::numeric_limits<double>::infinity();
        std::vector<double> point(ctx_.input_defaults);
        point[2] = t;
        for (int i = std::max(0, ci - ctx_.radius); i <= std::min(ctx_.grid.n - 1, ci + ctx_.radius); ++i) {
            for (int j = std::max(0, cj - ctx_.radius); j <= std::min(ctx_.grid.n - 1, cj + ctx_.radius); ++j) {
                point[0] = ctx_.grid.coord(i);
                point[1] = ctx_.grid.coord(j);
                best = std::max(best, state_.mean_at(point));
            }
        }
        return best;
    }

private:
    const GpState& state_;
    const GpRuleContext& ctx_;
};

/// log p(y | x) + log p(r | y_r) with the predictive mean as the rule summary.
inline double pseudo_log_marginal(const GpState& state, const RuleBase* rules, const ConfidenceSpec& conf,
                                  const GpRuleContext& ctx) {
    double value = state.log_marginal();
    if (rules != nullptr) {
        const GpPredictor predictor(state, ctx);
        value += rule_log_penalty(*rules, predictor, conf, ctx.rule_parameters);
    }
    return value;
}

struct GpHyperPriors {
    PriorSpec length = PriorSpec::gamma(1.0, 1.0);
    PriorSpec zeta = PriorSpec::half_cauchy(1.0);
    PriorSpec noise = PriorSpec::half_cauchy(1.0);
};

inline double log_hyper_prior(const KernelHyper& h, const GpHyperPriors& p) {
    double lp = p.zeta.log_density(h.zeta) + p.noise.log_density(h.noise);
    for (Eigen::Index j = 0; j < h.length.size(); ++j) {
        lp += p.length.log_density(h.length[j]);
    }
    return lp;
}

/// Log-space packing: (log l_1 .. log l_d, log zeta, log sigma_n).
inline std::vector<double> pack_log(const KernelHyper& h) {
    std::vector<double> v;
    for (Eigen::Index j = 0; j < h.length.size(); ++j) {
        v.push_back(std::log(h.length[j]));
    }
    v.push_back(std::log(h.zeta));
    v.push_back(std::log(h.noise));
    return v;
}

inline KernelHyper unpack_log(std::span<const double> v) {
    KernelHyper h;
    const auto d = static_cast<Eigen::Index>(v.size()) - 2;
    h.length.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        h.length[j] = std::exp(v[static_cast<std::size_t>(j)]);
    }
    h.zeta = std::exp(v[v.size() - 2]);
    h.noise = std::exp(v[v.size() - 1]);
    return h;
}

struct MapResult {
    KernelHyper hyper;
    double objective = 0.0;    // maximized log pseudo-posterior
    double log_marginal = 0.0; // log p(y | x) at the MAP
    SimplexResult optimizer;
};

/// Maximizes [pseudo-]log marginal + hyperparameter log priors by Nelder-Mead
/// over log hyperparameters. Without rules the context may be null.
inline MapResult fit_map(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KernelHyper& init,
                         const RuleBase* rules, const ConfidenceSpec& conf, const GpRuleContext* ctx,
                         const SimplexConfig& cfg, const GpHyperPriors& priors = {}) {
    init.validate(x.cols());
    if (rules != nullptr && ctx == nullptr) {
        throw ValidationError("fit_map: rules need a GP rule context");
    }
    const auto objective = [&](std::span<const double> v) {
        const KernelHyper h = unpack_log(v);
        const double lp = log_hyper_prior(h, priors);
        if (!std::isfinite(lp)) {
            return std::numeric_limits<double>::infinity();
        }
        try {
            const GpState state(x, y, h);
            const double value = rules != nullptr ? pseudo_log_marginal(state, rules, conf, *ctx) : state.log_marginal();
            return -(value + lp);
        } catch (const NumericalError&) {
            return std::numeric_limits<double>::infinity();
        }
    };
    const auto start = pack_log(init);
    MapResult out;
    out.optimizer = nelder_mead(objective, start, cfg);
    out.hyper = unpack_log(out.optimizer.argmin);
    out.objective = -out.optimizer.value;
    out.log_marginal = log_marginal_likelihood(x, y, out.hyper);
    return out;
}

} // namespace rulebayes
