#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "rulebayes/confidence.hpp"
#include "rulebayes/error.hpp"
#include "rulebayes/models.hpp"
#include "rulebayes/penalty.hpp"
#include "rulebayes/priors.hpp"
#include "rulebayes/rule_engine.hpp"

namespace rulebayes {

struct SamplerConfig {
    int iterations = 10000; // per chain, burn-in included
    int burn_in = 500;
    int thin = 1;
    int chains = 4;
    std::vector<double> proposal_sd;
    std::uint64_t seed = 1;
    bool parallel = false;
    /// Learn a proposal covariance and global scale during burn-in, then
    /// freeze them. Retained draws always come from a fixed proposal.
    bool adapt = false;
    int adapt_window = 500;

    void validate(std::size_t dimension) const {
        if (iterations < 1 || burn_in < 0 || burn_in >= iterations) {
            throw ConfigError("sampler: need 0 <= burn_in < iterations");
        }
        if (adapt && adapt_window < 1) {
            throw ConfigError("sampler: the adaptation window must be >= 1");
        }
        if (thin < 1) {
            throw ConfigError("sampler: thinning must be >= 1");
        }
        if (chains < 1) {
            throw ConfigError("sampler: need at least one chain");
        }
        if (proposal_sd.size() != dimension) {
            throw ConfigError("sampler: expected " + std::to_string(dimension) + " proposal scales, got " +
                              std::to_string(proposal_sd.size()));
        }
        for (const double s : proposal_sd) {
            if (!(s > 0.0) || !std::isfinite(s)) {
                throw ConfigError("sampler: proposal scales must be positive and finite");
            }
        }
    }

    [[nodiscard]] int retained_per_chain() const noexcept { return (iterations - burn_in - 1) / thin + 1; }
};

struct PosteriorSamples {
    std::vector<std::string> names;
    std::vector<Eigen::MatrixXd> draws; // one matrix per chain: retained draws x parameters
    std::vector<double> acceptance;
    std::vector<std::uint64_t> seeds;
    int burn_in = 0;
    int thin = 1;

    [[nodiscard]] Eigen::Index retained() const noexcept {
        Eigen::Index n = 0;
        for (const auto& d : draws) {
            n += d.rows();
        }
        return n;
    }

    /// All chains stacked in chain order.
    [[nodiscard]] Eigen::MatrixXd pooled() const {
        Eigen::MatrixXd out(retained(), static_cast<Eigen::Index>(names.size()));
        Eigen::Index row = 0;
        for (const auto& d : draws) {
            out.middleRows(row, d.rows()) = d;
            row += d.rows();
        }
        return out;
    }

    [[nodiscard]] Eigen::Index column(const std::string& name) const {
        for (std::size_t j = 0; j < names.size(); ++j) {
            if (names[j] == name) {
                return static_cast<Eigen::Index>(j);
            }
        }
        throw ValidationError("no parameter named '" + name + "' in the samples");
    }
};

using LogTarget = std::function<double(std::span<const double>)>;

/// Seed of chain `chain` under `master`; distinct chains get unrelated streams.
inline std::uint64_t chain_seed(std::uint64_t master, int chain) {
    std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32U),
                      static_cast<std::uint32_t>(chain), 0x5eedU};
    std::array<std::uint32_t, 2> words{};
    seq.generate(words.begin(), words.end());
    return (static_cast<std::uint64_t>(words[0]) << 32U) | words[1];
}

namespace detail {

inline double checked_target(const LogTarget& target, std::span<const double> x) {
    const double v = target(x);
    if (std::isnan(v)) {
        throw NumericalError("log target returned NaN");
    }
    return v;
}

struct ChainResult {
    Eigen::MatrixXd draws;
    double acceptance = 0.0;
};

/// Robbins-Monro step on the global log scale towards 0.234 acceptance, and
/// the covariance of the later half of the burn-in history so far, scaled by
/// 2.38^2 / d (floored by a small multiple of the initial proposal).
inline void adapt_proposal(const Eigen::MatrixXd& history, const SamplerConfig& cfg, long window_accepted,
                           double& log_scale, std::optional<Eigen::MatrixXd>& chol) {
    const double rate = static_cast<double>(window_accepted) / static_cast<double>(cfg.adapt_window);
    const double windows = static_cast<double>(history.rows()) / static_cast<double>(cfg.adapt_window);
    log_scale += (rate - 0.234) * 3.0 / std::sqrt(windows);
    const Eigen::Index n = history.rows() / 2;
    if (n < 2 * history.cols() + 2) {
        return;
    }
    const Eigen::MatrixXd recent = history.bottomRows(n);
    const Eigen::RowVectorXd mean = recent.colwise().mean();
    const Eigen::MatrixXd centred = recent.rowwise() - mean;
    Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(n - 1);
    const auto d = static_cast<double>(history.cols());
    cov *= 2.38 * 2.38 / d;
    for (Eigen::Index j = 0; j < cov.rows(); ++j) {
        const double floor = 1e-3 * cfg.proposal_sd[static_cast<std::size_t>(j)];
        cov(j, j) += floor * floor;
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
        return;
    }
    if (!chol) {
        log_scale = 0.0; // the covariance already carries the optimal scale
    }
    chol = llt.matrixL().toDenseMatrix();
}

inline ChainResult run_chain(const LogTarget& target, std::span<const double> init, const SamplerConfig& cfg,
                             std::uint64_t seed) {
    const std::size_t dim = init.size();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    std::vector<double> current(init.begin(), init.end());
    std::vector<double> proposal(dim);
    double current_lp = checked_target(target, current);

    const auto d = static_cast<Eigen::Index>(dim);
    std::optional<Eigen::MatrixXd> chol; // proposal factor once adapted
    double log_scale = 0.0;
    Eigen::MatrixXd history;
    if (cfg.adapt) {
        history.resize(cfg.burn_in, d);
    }
    Eigen::VectorXd z(d);
    long window_accepted = 0;

    ChainResult out;
    out.draws.resize(cfg.retained_per_chain(), static_cast<Eigen::Index>(dim));
    Eigen::Index row = 0;
    long accepted = 0;
    for (int it = 0; it < cfg.iterations; ++it) {
        const double scale = std::exp(log_scale);
        for (Eigen::Index j = 0; j < d; ++j) {
            z[j] = normal(rng);
        }
        if (chol) {
            const Eigen::VectorXd step = *chol * z;
            for (Eigen::Index j = 0; j < d; ++j) {
                proposal[static_cast<std::size_t>(j)] = current[static_cast<std::size_t>(j)] + scale * step[j];
            }
        } else {
            for (std::size_t j = 0; j < dim; ++j) {
                proposal[j] = current[j] + scale * cfg.proposal_sd[j] * z[static_cast<Eigen::Index>(j)];
            }
        }
        const double proposal_lp = checked_target(target, proposal);
        // The uniform is drawn unconditionally so the random stream does not
        // depend on the target values.
        const double u = uniform(rng);
        bool accept = false;
        if (std::isinf(current_lp) && current_lp < 0.0) {
            accept = std::isfinite(proposal_lp);
        } else if (proposal_lp != -std::numeric_limits<double>::infinity()) {
            accept = std::log(u) < proposal_lp - current_lp;
        }
        if (accept) {
            current.swap(proposal);
            current_lp = proposal_lp;
            ++accepted;
            ++window_accepted;
        }
        if (cfg.adapt && it < cfg.burn_in) {
            for (Eigen::Index j = 0; j < d; ++j) {
                history(it, j) = current[static_cast<std::size_t>(j)];
            }
            if ((it + 1) % cfg.adapt_window == 0) {
                adapt_proposal(history.topRows(it + 1), cfg, window_accepted, log_scale, chol);
                window_accepted = 0;
            }
        }
        if (it >= cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0) {
            for (std::size_t j = 0; j < dim; ++j) {
                out.draws(row, static_cast<Eigen::Index>(j)) = current[j];
            }
            ++row;
        }
    }
    out.acceptance = static_cast<double>(accepted) / static_cast<double>(cfg.iterations);
    return out;
}

} // namespace detail

/// Multi-chain Gaussian random-walk Metropolis-Hastings. Each chain starts at
/// `init` and draws from its own stream seeded by chain_seed(cfg.seed, c).
inline PosteriorSamples metropolis_hastings(const LogTarget& target, std::span<const double> init,
                                            const SamplerConfig& cfg, std::vector<std::string> names = {}) {
    cfg.validate(init.size());
    if (names.empty()) {
        for (std::size_t j = 0; j < init.size(); ++j) {
            names.push_back("p" + std::to_string(j));
        }
    }
    if (names.size() != init.size()) {
        throw ValidationError("metropolis_hastings: names and initial values differ in length");
    }
    PosteriorSamples ps;
    ps.names = std::move(names);
    ps.burn_in = cfg.burn_in;
    ps.thin = cfg.thin;
    const auto n_chains = static_cast<std::size_t>(cfg.chains);
    for (int c = 0; c < cfg.chains; ++c) {
        ps.seeds.push_back(chain_seed(cfg.seed, c));
    }
    std::vector<detail::ChainResult> results(n_chains);
    if (cfg.parallel && n_chains > 1) {
        std::vector<std::exception_ptr> errors(n_chains);
        std::vector<std::thread> workers;
        for (std::size_t c = 0; c < n_chains; ++c) {
            workers.emplace_back([&, c] {
                try {
                    results[c] = detail::run_chain(target, init, cfg, ps.seeds[c]);
                } catch (...) {
                    errors[c] = std::current_exception();
                }
            });
        }
        for (auto& w : workers) {
            w.join();
        }
        for (const auto& e : errors) {
            if (e) {
                std::rethrow_exception(e);
            }
        }
    } else {
        for (std::size_t c = 0; c < n_chains; ++c) {
            results[c] = detail::run_chain(target, init, cfg, ps.seeds[c]);
        }
    }
    for (auto& r : results) {
        ps.draws.push_back(std::move(r.draws));
        ps.acceptance.push_back(r.acceptance);
    }
    return ps;
}

struct ParameterSummary {
    std::string name;
    double mean = 0.0;
    double sd = 0.0;
};

/// Pooled mean and standard deviation (n - 1 divisor) per parameter.
inline std::vector<ParameterSummary> posterior_summary(const PosteriorSamples& ps) {
    const Eigen::MatrixXd all = ps.pooled();
    if (all.rows() < 2) {
        throw ValidationError("posterior_summary needs at least two retained draws");
    }
    std::vector<ParameterSummary> out;
    const auto n = static_cast<double>(all.rows());
    for (Eigen::Index j = 0; j < all.cols(); ++j) {
        const double mean = all.col(j).mean();
        const double ss = (all.col(j).array() - mean).square().sum();
        out.push_back({ps.names[static_cast<std::size_t>(j)], mean, std::sqrt(ss / (n - 1.0))});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rule-penalized posterior
// ---------------------------------------------------------------------------

/// log p(x | theta) + log p(theta) + log p(r | theta, eta) + log p(eta).
///
/// The state vector is the model parameters followed by the sampled rule
/// hyperparameters. Every parameter the rule base declares must be either a
/// sampled hyperparameter or a fixed constant.
class RulePosterior {
public:
    RulePosterior(const RegressionModel& model, const RegressionData& data, const RuleBase* rules,
                  ConfidenceSpec conf, PriorMap hyper_priors = {}, std::map<std::string, double> constants = {},
                  std::vector<double> input_defaults = {})
        : model_(model), data_(data), rules_(rules), conf_(conf), hyper_priors_(std::move(hyper_priors)),
          defaults_(std::move(input_defaults)) {
        names_ = model_.parameter_names();
        for (const auto& [name, prior] : hyper_priors_) {
            hyper_names_.push_back(name);
            names_.push_back(name);
        }
        if (defaults_.empty()) {
            defaults_.assign(model_.input_names().size(), 0.0);
        }
        if (defaults_.size() != model_.input_names().size()) {
            throw ValidationError("input defaults do not match the model inputs");
        }
        if (rules_ == nullptr) {
            return;
        }
        const auto& declared = rules_->variables.parameters;
        rule_values_.assign(declared.size(), 0.0);
        for (std::size_t k = 0; k < declared.size(); ++k) {
            const auto& name = declared[k];
            if (const auto it = std::find(hyper_names_.begin(), hyper_names_.end(), name); it != hyper_names_.end()) {
                sampled_slots_.emplace_back(k, model_.parameter_names().size() +
                                                   static_cast<std::size_t>(it - hyper_names_.begin()));
            } else if (const auto c = constants.find(name); c != constants.end()) {
                rule_values_[k] = c->second;
            } else {
                throw ValidationError("rule parameter '" + name + "' is neither a hyperparameter nor a constant");
            }
        }
    }

    [[nodiscard]] const std::vector<std::string>& names() const noexcept { return names_; }
    [[nodiscard]] const std::vector<std::string>& hyper_names() const noexcept { return hyper_names_; }
    [[nodiscard]] const std::vector<double>& input_defaults() const noexcept { return defaults_; }

    /// Rule-parameter vector (declaration order) for a state.
    [[nodiscard]] std::vector<double> rule_parameters(std::span<const double> state) const {
        std::vector<double> values = rule_values_;
        for (const auto& [slot, index] : sampled_slots_) {
            values[slot] = state[index];
        }
        return values;
    }

    [[nodiscard]] double operator()(std::span<const double> state) const {
        if (state.size() != names_.size()) {
            throw ValidationError("posterior state has the wrong length");
        }
        const auto n_model = model_.parameter_names().size();
        const auto theta = state.first(n_model);
        const auto eta = state.subspan(n_model);
        double lp = log_prior(model_.parameter_names(), theta, model_.priors());
        lp += log_prior(hyper_names_, eta, hyper_priors_);
        if (lp == -std::numeric_limits<double>::infinity()) {
            return lp;
        }
        lp += log_likelihood(model_, theta, data_);
        if (rules_ != nullptr) {
            const auto params = rule_parameters(state);
            const ModelPredictor predictor(model_, theta, defaults_);
            lp += rule_log_penalty(*rules_, predictor, conf_, params);
        }
        return lp;
    }

private:
    const RegressionModel& model_;
    const RegressionData& data_;
    const RuleBase* rules_;
    ConfidenceSpec conf_;
    PriorMap hyper_priors_;
    std::vector<double> defaults_;
    std::vector<std::string> names_;
    std::vector<std::string> hyper_names_;
    std::vector<double> rule_values_;
    std::vector<std::pair<std::size_t, std::size_t>> sampled_slots_;
};

/// One-shot evaluation of the rule-penalized log posterior.
inline double rule_log_posterior(const RegressionModel& model, const RegressionData& data, const RuleBase* rules,
                                 const ConfidenceSpec& conf, const PriorMap& hyper_priors,
                                 std::span<const double> state, const std::map<std::string, double>& constants = {},
                                 std::vector<double> input_defaults = {}) {
    const RulePosterior posterior(model, data, rules, conf, hyper_priors, constants, std::move(input_defaults));
    return posterior(state);
}

} // namespace rulebayes
