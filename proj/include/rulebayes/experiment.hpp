#pragma once

// Config-driven experiment runner: data preparation, fitting, evaluation and
// output files. One JSON document describes a run; an optional "desk" object
// inside it is merge-patched over the rest when the scaled-down variant is
// requested.

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rulebayes/confidence.hpp"
#include "rulebayes/data.hpp"
#include "rulebayes/error.hpp"
#include "rulebayes/field.hpp"
#include "rulebayes/gp.hpp"
#include "rulebayes/inference.hpp"
#include "rulebayes/models.hpp"
#include "rulebayes/optim.hpp"
#include "rulebayes/priors.hpp"
#include "rulebayes/rule_engine.hpp"
#include "rulebayes/rule_parser.hpp"

namespace rulebayes::experiment {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline const std::set<std::string>& experiment_ids() {
    static const std::set<std::string> ids{"linreg", "splines", "gp2d", "ccpp", "turbine", "custom"};
    return ids;
}

struct RunOptions {
    std::optional<std::uint64_t> seed;
    bool desk = false;
    fs::path out_dir;  // empty: the config's "output_dir", else out/<name>
    fs::path data_dir; // empty: RULEBAYES_DATA_DIR, else ./data
};

struct Config {
    json doc;
    fs::path path;
};

// ---------------------------------------------------------------------------
// Small utilities
// ---------------------------------------------------------------------------

namespace detail {

inline std::string num(double v) {
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        throw ConfigError(where + ": missing '" + key + "'");
    }
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + ": '" + key + "' has the wrong type");
    }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        return fallback;
    }
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + ": '" + key + "' has the wrong type");
    }
}

inline const json& object(const json& j, const char* key, const std::string& where) {
    static const json empty = json::object();
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        return empty;
    }
    if (!it->is_object()) {
        throw ConfigError(where + ": '" + key + "' must be an object");
    }
    return *it;
}

inline PriorSpec parse_prior(const json& j, const std::string& where) {
    if (!j.is_object()) {
        throw ConfigError(where + ": a prior must be an object");
    }
    const auto family = get<std::string>(j, "family", where);
    try {
        if (family == "normal") {
            return PriorSpec::normal(get<double>(j, "mu", where), get<double>(j, "sigma", where));
        }
        if (family == "half_cauchy") {
            return PriorSpec::half_cauchy(get<double>(j, "scale", where));
        }
        if (family == "gamma") {
            return PriorSpec::gamma(get<double>(j, "shape", where), get<double>(j, "rate", where));
        }
    } catch (const ValidationError& e) {
        throw ConfigError(where + ": " + e.what());
    }
    throw ConfigError(where + ": unknown prior family '" + family + "'");
}

inline ConfidenceSpec parse_confidence(const json& j, const std::string& where) {
    try {
        return ConfidenceSpec(get<double>(j, "a", where), get<double>(j, "b", where));
    } catch (const ValidationError& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

/// Name patterns: exact, or a prefix followed by '*'.
inline bool matches(const std::string& pattern, const std::string& name) {
    if (!pattern.empty() && pattern.back() == '*') {
        return name.compare(0, pattern.size() - 1, pattern, 0, pattern.size() - 1) == 0;
    }
    return pattern == name;
}

/// Exact names win over patterns; among patterns the longest wins.
inline std::optional<double> lookup_pattern(const json& table, const std::string& name, const std::string& where) {
    std::optional<double> best;
    std::size_t best_len = 0;
    for (const auto& [pattern, value] : table.items()) {
        if (!matches(pattern, name)) {
            continue;
        }
        if (!value.is_number()) {
            throw ConfigError(where + ": '" + pattern + "' must be a number");
        }
        const std::size_t len = pattern == name ? std::string::npos : pattern.size();
        if (!best || len > best_len) {
            best = value.get<double>();
            best_len = len;
        }
    }
    return best;
}

inline void write_atomic(const fs::path& path, const std::string& content) {
    std::error_code ec;
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path(), ec);
        if (ec) {
            throw IoError("cannot create '" + path.parent_path().string() + "': " + ec.message());
        }
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot write '" + tmp.string() + "'");
        }
        out << content;
        out.flush();
        if (!out) {
            throw IoError("write failed for '" + tmp.string() + "'");
        }
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        throw IoError("cannot move '" + tmp.string() + "' into place: " + ec.message());
    }
}

/// Runs one stage, naming it in numerical and evaluation failures.
template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const NumericalError& e) {
        throw NumericalError(std::string(name) + ": " + e.what());
    } catch (const EvaluationError& e) {
        throw NumericalError(std::string(name) + ": " + e.what());
    }
}

inline std::vector<std::size_t> thinned_indices(std::size_t n, std::size_t cap) {
    std::vector<std::size_t> idx;
    if (n == 0) {
        return idx;
    }
    const std::size_t keep = std::min(n, std::max<std::size_t>(cap, 1));
    for (std::size_t k = 0; k < keep; ++k) {
        idx.push_back(k * n / keep);
    }
    return idx;
}

inline json metrics_json(const Metrics& m) {
    return json{{"rmse", m.rmse}, {"mse", m.mse}, {"mae", m.mae}};
}

} // namespace detail

// ---------------------------------------------------------------------------
// Config loading
// ---------------------------------------------------------------------------

inline Config load_config(const fs::path& path, bool desk) {
    Config cfg;
    cfg.path = path;
    const std::string text = detail::read_file(path);
    try {
        cfg.doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
    if (!cfg.doc.is_object()) {
        throw ConfigError("'" + path.string() + "' must hold a JSON object");
    }
    if (desk) {
        if (const auto it = cfg.doc.find("desk"); it != cfg.doc.end()) {
            if (!it->is_object()) {
                throw ConfigError("'desk' must be an object");
            }
            const json patch = *it;
            cfg.doc.merge_patch(patch);
        }
    }
    cfg.doc.erase("desk");
    static const std::set<std::string> known{
        "experiment", "name",         "description", "seed",           "output_dir", "data",      "model",  "rules",
        "confidence", "hyper_priors", "constants",   "input_defaults", "sampler",    "optimizer", "outputs"};
    for (const auto& [key, value] : cfg.doc.items()) {
        if (known.count(key) == 0) {
            throw ConfigError("config: unknown key '" + key + "'");
        }
    }
    const auto id = detail::get<std::string>(cfg.doc, "experiment", "config");
    if (experiment_ids().count(id) == 0) {
        throw ConfigError("config: unknown experiment '" + id + "'");
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Experiment
// ---------------------------------------------------------------------------

/// Posterior predictive mean: the average model prediction over a fixed,
/// evenly spaced subset of retained draws.
class PosteriorMeanPredictor final : public Predictor {
public:
    PosteriorMeanPredictor(const RegressionModel& model, const Eigen::MatrixXd& draws, std::size_t model_params,
                           std::vector<double> defaults, std::size_t cap = 4000)
        : model_(model), defaults_(std::move(defaults)) {
        for (const std::size_t r : detail::thinned_indices(static_cast<std::size_t>(draws.rows()), cap)) {
            std::vector<double> p(model_params);
            for (std::size_t j = 0; j < model_params; ++j) {
                p[j] = draws(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
            }
            draws_.push_back(std::move(p));
        }
    }

    [[nodiscard]] double output(std::span<const double> inputs, int channel) const override {
        double s = 0.0;
        for (const auto& p : draws_) {
            s += model_.predict(p, inputs, channel);
        }
        return s / static_cast<double>(draws_.size());
    }
    [[nodiscard]] std::span<const double> input_defaults() const override { return defaults_; }

private:
    const RegressionModel& model_;
    std::vector<double> defaults_;
    std::vector<std::vector<double>> draws_;
};

struct FitSummary {
    PosteriorSamples samples;
    std::vector<ParameterSummary> summary;
};

struct RunResult {
    std::string name;
    fs::path out_dir;
    json summary;
    json metrics;
    std::optional<FitSummary> posterior;
    std::optional<MapResult> map;
    double wall_seconds = 0.0;
};

class Experiment {
public:
    Experiment(Config cfg, RunOptions opts) : cfg_(std::move(cfg)), opts_(std::move(opts)) {
        const json& doc = cfg_.doc;
        id_ = detail::get<std::string>(doc, "experiment", "config");
        name_ = detail::get_or<std::string>(doc, "name", cfg_.path.stem().string(), "config");
        seed_ = opts_.seed ? *opts_.seed : detail::get_or<std::uint64_t>(doc, "seed", 1, "config");
        if (opts_.out_dir.empty()) {
            const auto dir = detail::get_or<std::string>(doc, "output_dir", "", "config");
            opts_.out_dir = dir.empty() ? fs::path("out") / name_ : fs::path(dir);
        }
        if (opts_.data_dir.empty()) {
            if (const char* env = std::getenv("RULEBAYES_DATA_DIR"); env != nullptr && *env != '\0') {
                opts_.data_dir = env;
            }
        }
        detail::stage("data", [&] { prepare_data(); });
        detail::stage("model", [&] { build_model(); });
        detail::stage("rules", [&] { build_rules(); });
    }

    [[nodiscard]] const std::string& id() const noexcept { return id_; }
    [[nodiscard]] const std::string& name() const noexcept { return name_; }
    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
    [[nodiscard]] const fs::path& out_dir() const noexcept { return opts_.out_dir; }
    [[nodiscard]] bool is_field() const noexcept { return field_.has_value(); }
    [[nodiscard]] const RegressionModel& model() const { return *model_; }
    [[nodiscard]] const RegressionData& train() const { return train_; }
    [[nodiscard]] const RegressionData& test() const { return test_; }
    [[nodiscard]] const RuleBase* rules() const noexcept { return rules_ ? &*rules_ : nullptr; }
    [[nodiscard]] const ConfidenceSpec& confidence() const noexcept { return conf_; }
    [[nodiscard]] const std::map<std::string, double>& constants() const noexcept { return constants_; }
    [[nodiscard]] const std::vector<double>& input_defaults() const noexcept { return defaults_; }
    [[nodiscard]] const PriorMap& hyper_priors() const noexcept { return hyper_priors_; }

    [[nodiscard]] RulePosterior posterior() const {
        return RulePosterior(*model_, train_, rules(), conf_, hyper_priors_, constants_, defaults_);
    }

    /// Writes the prepared data: train.csv / test.csv, or fields.csv.
    void generate() const {
        if (field_) {
            detail::write_atomic(opts_.out_dir / "fields.csv", fields_csv(nullptr));
            return;
        }
        detail::write_atomic(opts_.out_dir / "train.csv", table_csv(train_table_));
        if (test_table_.rows() > 0) {
            detail::write_atomic(opts_.out_dir / "test.csv", table_csv(test_table_));
        }
    }

    /// Fits and writes samples.csv + summary.json, or map.json + summary.json.
    RunResult fit() const { return execute(false); }

    /// Fit plus metrics.json, plotdata/ and timing.json.
    RunResult evaluate() const { return execute(true); }

private:
    struct FieldData {
        AdvectionDiffusionSpec spec;
        std::vector<FieldSnapshot> snapshots;
        std::vector<int> inputs;
        Eigen::MatrixXd x;
        Eigen::VectorXd y;
        GpRuleContext ctx;
    };

    Config cfg_;
    RunOptions opts_;
    std::string id_;
    std::string name_;
    std::uint64_t seed_ = 1;

    std::vector<std::string> features_;
    std::string target_;
    Dataset train_table_;
    Dataset test_table_;
    Dataset full_table_;
    RegressionData train_;
    RegressionData test_;
    int channels_ = 1;
    std::optional<FieldData> field_;

    std::unique_ptr<RegressionModel> model_;
    std::optional<RuleBase> rules_;
    ConfidenceSpec conf_;
    PriorMap hyper_priors_;
    std::map<std::string, double> constants_;
    std::vector<double> defaults_;

    // -- data ---------------------------------------------------------------

    [[nodiscard]] fs::path resolve(const std::string& p, bool data) const {
        const fs::path path(p);
        if (path.is_absolute()) {
            return path;
        }
        if (data) {
            return (opts_.data_dir.empty() ? fs::path("data") : opts_.data_dir) / path;
        }
        return cfg_.path.parent_path() / path;
    }

    static RegressionData to_regression(const Dataset& ds, const std::vector<std::string>& features,
                                        const std::string& target, const std::string& channel_column = {}) {
        RegressionData rd;
        rd.inputs.resize(ds.rows(), static_cast<Eigen::Index>(features.size()));
        for (std::size_t j = 0; j < features.size(); ++j) {
            rd.inputs.col(static_cast<Eigen::Index>(j)) = ds.column(features[j]);
        }
        rd.targets = ds.column(target);
        if (!channel_column.empty()) {
            const Eigen::VectorXd ch = ds.column(channel_column);
            for (Eigen::Index i = 0; i < ch.size(); ++i) {
                rd.channels.push_back(static_cast<int>(std::lround(ch[i])) - 1);
            }
        }
        return rd;
    }

    static Dataset rows_where(const Dataset& ds, const std::vector<bool>& keep) {
        std::vector<Eigen::Index> idx;
        for (std::size_t i = 0; i < keep.size(); ++i) {
            if (keep[i]) {
                idx.push_back(static_cast<Eigen::Index>(i));
            }
        }
        Dataset out = ds;
        out.values = ds.values(idx, Eigen::all);
        return out;
    }

    void prepare_data() {
        const json& data = detail::object(cfg_.doc, "data", "config");
        const bool has_gen = data.contains("generator");
        const bool has_csv = data.contains("csv");
        if (has_gen == has_csv) {
            throw ConfigError("data: give exactly one of 'generator' or 'csv'");
        }
        const auto data_seed = detail::get_or<std::uint64_t>(data, "seed", seed_, "data");
        if (has_csv) {
            prepare_csv(data);
            return;
        }
        const auto gen = detail::get<std::string>(data, "generator", "data");
        if (gen == "linear") {
            LinearGenSpec spec;
            spec.points = detail::get_or(data, "points", spec.points, "data");
            spec.x_lo = detail::get_or(data, "x_lo", spec.x_lo, "data");
            spec.x_hi = detail::get_or(data, "x_hi", spec.x_hi, "data");
            spec.intercept = detail::get_or(data, "intercept", spec.intercept, "data");
            spec.slope = detail::get_or(data, "slope", spec.slope, "data");
            spec.noise_sd = detail::get_or(data, "noise_sd", spec.noise_sd, "data");
            spec.observed_lo = detail::get_or(data, "observed_lo", spec.observed_lo, "data");
            spec.observed_hi = detail::get_or(data, "observed_hi", spec.observed_hi, "data");
            const LinearData ld = gen_linear(data_seed, spec);
            features_ = {"x"};
            target_ = "y";
            full_table_ = ld.full;
            train_table_ = ld.observed;
            std::vector<bool> held(static_cast<std::size_t>(ld.full.rows()));
            for (Eigen::Index i = 0; i < ld.full.rows(); ++i) {
                const double x = ld.full.values(i, 0);
                held[static_cast<std::size_t>(i)] = !(x >= spec.observed_lo && x <= spec.observed_hi);
            }
            test_table_ = rows_where(ld.full, held);
            train_ = to_regression(train_table_, features_, target_);
            test_ = to_regression(test_table_, features_, target_);
        } else if (gen == "advection_surrogate") {
            SurrogateGenSpec spec;
            spec.points = detail::get_or(data, "points", spec.points, "data");
            spec.times = detail::get_or(data, "times", spec.times, "data");
            spec.amplitude = detail::get_or(data, "amplitude", spec.amplitude, "data");
            spec.noise_sd = detail::get_or(data, "noise_sd", spec.noise_sd, "data");
            const Dataset ds = gen_advection_surrogate(data_seed, spec);
            features_ = {"x"};
            target_ = "y";
            channels_ = static_cast<int>(spec.times.size());
            full_table_ = ds;
            train_table_ = ds;
            train_ = to_regression(ds, features_, target_, "snapshot");
            // Held-out truth: the noiseless surrogate on a fine grid.
            const int fine = detail::get_or(data, "test_points", 200, "data");
            test_table_.columns = ds.columns;
            test_table_.target = "y";
            test_table_.values.resize(static_cast<Eigen::Index>(fine) * channels_, 4);
            Eigen::Index row = 0;
            for (int s = 0; s < channels_; ++s) {
                for (int i = 0; i < fine; ++i) {
                    const double x = 2.0 * std::numbers::pi * i / std::max(fine - 1, 1);
                    const double t = spec.times[static_cast<std::size_t>(s)];
                    test_table_.values.row(row++) << x, t, s + 1, advection_surrogate_value(spec, x, t);
                }
            }
            test_ = to_regression(test_table_, features_, target_, "snapshot");
        } else if (gen == "advection_diffusion") {
            prepare_field(data);
        } else {
            throw ConfigError("data: unknown generator '" + gen + "'");
        }
    }

    void prepare_csv(const json& data) {
        const fs::path path = resolve(detail::get<std::string>(data, "csv", "data"), true);
        target_ = detail::get<std::string>(data, "target", "data");
        features_ = detail::get<std::vector<std::string>>(data, "features", "data");
        full_table_ = load_csv(path.string(), target_);
        for (const auto& f : features_) {
            (void)full_table_.index(f);
        }
        const json& filter = detail::object(data, "filter", "data");
        if (filter.empty()) {
            train_table_ = full_table_;
        } else {
            const auto column = detail::get<std::string>(filter, "column", "data.filter");
            const CompareOp op = parse_compare_op(detail::get<std::string>(filter, "op", "data.filter"));
            auto [kept, held] = filter_rows(full_table_, column, op, detail::get<double>(filter, "threshold", "data.filter"));
            train_table_ = std::move(kept);
            test_table_ = std::move(held);
        }
        if (train_table_.rows() == 0) {
            throw ValidationError("data: no training rows after filtering");
        }
        train_ = to_regression(train_table_, features_, target_);
        if (test_table_.rows() > 0) {
            test_ = to_regression(test_table_, features_, target_);
        }
    }

    void prepare_field(const json& data) {
        FieldData fd;
        auto& spec = fd.spec;
        spec.grid.n = detail::get_or(data, "grid", spec.grid.n, "data");
        spec.grid.length = detail::get_or(data, "length", spec.grid.length, "data");
        spec.snapshots = detail::get_or(data, "snapshots", spec.snapshots, "data");
        const double duration = detail::get_or(data, "duration", 35.11, "data");
        if (spec.snapshots < 2 || !(duration > 0.0)) {
            throw ConfigError("data: need at least two snapshots and a positive duration");
        }
        spec.dt = duration / (spec.snapshots - 1);
        spec.x0 = detail::get_or(data, "x0", spec.x0, "data");
        spec.y0 = detail::get_or(data, "y0", spec.y0, "data");
        spec.variance0 = detail::get_or(data, "variance0", spec.variance0, "data");
        spec.u = detail::get_or(data, "u", spec.u, "data");
        spec.v = detail::get_or(data, "v", spec.v, "data");
        spec.diffusion = detail::get_or(data, "diffusion", spec.diffusion, "data");
        spec.mass = detail::get_or(data, "mass", spec.mass, "data");
        fd.snapshots = gen_advection_diffusion(spec);
        fd.inputs = detail::get_or(data, "input_snapshots", std::vector<int>{0, spec.snapshots / 2, spec.snapshots - 1},
                                   "data");
        std::sort(fd.inputs.begin(), fd.inputs.end());
        if (fd.inputs.size() < 2 || std::adjacent_find(fd.inputs.begin(), fd.inputs.end()) != fd.inputs.end() ||
            fd.inputs.front() < 0 || fd.inputs.back() >= spec.snapshots) {
            throw ConfigError("data: input_snapshots must be at least two distinct snapshot indices");
        }
        const int n = spec.grid.n;
        const auto per = static_cast<Eigen::Index>(n) * n;
        fd.x.resize(per * static_cast<Eigen::Index>(fd.inputs.size()), 3);
        fd.y.resize(fd.x.rows());
        Eigen::Index r = 0;
        std::vector<FieldSnapshot> input_frames;
        for (const int k : fd.inputs) {
            const auto& s = fd.snapshots[static_cast<std::size_t>(k)];
            input_frames.push_back(s);
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    fd.x.row(r) << spec.grid.coord(i), spec.grid.coord(j), s.time;
                    fd.y[r++] = s.values(i, j);
                }
            }
        }
        train_.inputs = fd.x;
        train_.targets = fd.y;
        const auto held = static_cast<Eigen::Index>(fd.snapshots.size() - fd.inputs.size());
        test_.inputs.resize(per * held, 3);
        test_.targets.resize(per * held);
        Eigen::Index q = 0;
        for (std::size_t k = 0; k < fd.snapshots.size(); ++k) {
            if (std::binary_search(fd.inputs.begin(), fd.inputs.end(), static_cast<int>(k))) {
                continue;
            }
            const auto& s = fd.snapshots[k];
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    test_.inputs.row(q) << spec.grid.coord(i), spec.grid.coord(j), s.time;
                    test_.targets[q++] = s.values(i, j);
                }
            }
        }
        fd.ctx.grid = spec.grid;
        fd.ctx.path = blob_center_path(input_frames, spec.grid);
        fd.ctx.input_defaults = {0.0, 0.0, 0.0};
        features_ = {"x", "y", "t"};
        target_ = "c";
        field_ = std::move(fd);
    }

    [[nodiscard]] double derived_constant(const json& spec, const std::string& name) const {
        const std::string where = "constants." + name;
        if (spec.is_number()) {
            return spec.get<double>();
        }
        if (spec.is_string()) {
            const auto what = spec.get<std::string>();
            if (field_) {
                if (what == "final_time") {
                    return field_->snapshots.back().time;
                }
                if (what == "input_peak_min") {
                    double m = std::numeric_limits<double>::infinity();
                    for (const int k : field_->inputs) {
                        m = std::min(m, field_->snapshots[static_cast<std::size_t>(k)].values.maxCoeff());
                    }
                    return m;
                }
            }
            throw ConfigError(where + ": unknown derived value '" + what + "'");
        }
        if (spec.is_object() && spec.contains("percentile")) {
            const json& p = spec["percentile"];
            if (field_) {
                throw ConfigError(where + ": percentiles need tabular data");
            }
            const auto column = detail::get<std::string>(p, "column", where);
            const double q = detail::get<double>(p, "p", where);
            const auto source = detail::get_or<std::string>(p, "source", "train", where);
            const Dataset* ds = source == "train" ? &train_table_ : source == "full" ? &full_table_ : nullptr;
            if (ds == nullptr) {
                throw ConfigError(where + ": source must be 'train' or 'full'");
            }
            try {
                return percentile(*ds, column, q);
            } catch (const ValidationError& e) {
                throw ConfigError(where + ": " + e.what());
            }
        }
        throw ConfigError(where + ": expected a number, a derived-value name or a percentile object");
    }

    // -- model --------------------------------------------------------------

    void build_model() {
        const json& m = detail::object(cfg_.doc, "model", "config");
        const auto type = detail::get<std::string>(m, "type", "model");
        if (field_) {
            if (type != "gp") {
                throw ConfigError("model: field data needs the 'gp' model");
            }
            return;
        }
        if (type == "linear") {
            LinearModelSpec spec;
            const json& ic = detail::object(m, "intercept", "model");
            spec.intercept_name = detail::get_or<std::string>(ic, "name", "alpha", "model.intercept");
            if (ic.contains("prior")) {
                spec.intercept_prior = detail::parse_prior(ic["prior"], "model.intercept.prior");
            }
            const auto terms = m.find("terms");
            if (terms == m.end() || !terms->is_array()) {
                throw ConfigError("model: 'terms' must be an array");
            }
            std::vector<std::string> feats;
            for (const auto& t : *terms) {
                LinearTerm term;
                term.feature = detail::get<std::string>(t, "feature", "model.terms");
                term.name = detail::get<std::string>(t, "name", "model.terms");
                if (t.contains("prior")) {
                    term.prior = detail::parse_prior(t["prior"], "model.terms." + term.name);
                }
                feats.push_back(term.feature);
                spec.slopes.push_back(std::move(term));
            }
            if (feats != features_) {
                // Model terms decide the feature order.
                for (const auto& f : feats) {
                    (void)train_table_.index(f);
                }
                features_ = feats;
                train_ = to_regression(train_table_, features_, target_);
                if (test_table_.rows() > 0) {
                    test_ = to_regression(test_table_, features_, target_);
                }
            }
            spec.noise_sd = detail::get_or(m, "noise_sd", spec.noise_sd, "model");
            if (m.contains("noise_prior") && !m["noise_prior"].is_null()) {
                spec.noise_prior = detail::parse_prior(m["noise_prior"], "model.noise_prior");
            }
            try {
                model_ = std::make_unique<LinearModel>(std::move(spec));
            } catch (const ValidationError& e) {
                throw ConfigError(std::string("model: ") + e.what());
            }
        } else if (type == "bspline") {
            BSplineModelSpec spec;
            spec.degree = detail::get_or(m, "degree", spec.degree, "model");
            spec.interior_knots = detail::get_or(m, "interior_knots", spec.interior_knots, "model");
            spec.channels = channels_;
            if (features_.size() != 1) {
                throw ConfigError("model: the B-spline model takes one input");
            }
            spec.input = features_.front();
            const Eigen::VectorXd x = train_.inputs.col(0);
            const auto range = detail::get_or(m, "x_range", std::vector<double>{x.minCoeff(), x.maxCoeff()}, "model");
            if (range.size() != 2 || !(range[0] < range[1])) {
                throw ConfigError("model: x_range must be [lo, hi] with lo < hi");
            }
            spec.x_lo = range[0];
            spec.x_hi = range[1];
            if (m.contains("a0_prior")) {
                spec.a0_prior = detail::parse_prior(m["a0_prior"], "model.a0_prior");
            }
            if (m.contains("increment_prior")) {
                spec.increment_prior = detail::parse_prior(m["increment_prior"], "model.increment_prior");
            }
            if (m.contains("scale_prior")) {
                spec.scale_prior = detail::parse_prior(m["scale_prior"], "model.scale_prior");
            }
            spec.noise_sd = detail::get_or(m, "noise_sd", spec.noise_sd, "model");
            try {
                model_ = std::make_unique<BSplineModel>(std::move(spec));
            } catch (const ValidationError& e) {
                throw ConfigError(std::string("model: ") + e.what());
            }
        } else {
            throw ConfigError("model: unknown type '" + type + "'");
        }
    }

    // -- rules --------------------------------------------------------------

    void build_rules() {
        const json& doc = cfg_.doc;
        if (doc.contains("confidence")) {
            conf_ = detail::parse_confidence(doc["confidence"], "confidence");
        }
        for (const auto& [name, p] : detail::object(doc, "hyper_priors", "config").items()) {
            hyper_priors_.emplace(name, detail::parse_prior(p, "hyper_priors." + name));
        }
        if (field_ && !hyper_priors_.empty()) {
            throw ConfigError("hyper_priors are not supported for the GP model");
        }
        for (const auto& [name, spec] : detail::object(doc, "constants", "config").items()) {
            if (hyper_priors_.count(name) != 0) {
                throw ConfigError("constants: '" + name + "' is also a hyperparameter");
            }
            constants_[name] = derived_constant(spec, name);
        }

        if (!field_) {
            defaults_.assign(features_.size(), 0.0);
            for (std::size_t j = 0; j < features_.size(); ++j) {
                defaults_[j] = train_.rows() > 0 ? train_.inputs.col(static_cast<Eigen::Index>(j)).mean() : 0.0;
            }
            for (const auto& [name, v] : detail::object(doc, "input_defaults", "config").items()) {
                const auto it = std::find(features_.begin(), features_.end(), name);
                if (it == features_.end() || !v.is_number()) {
                    throw ConfigError("input_defaults: '" + name + "' is not a numeric model input");
                }
                defaults_[static_cast<std::size_t>(it - features_.begin())] = v.get<double>();
            }
        }

        const json& r = detail::object(doc, "rules", "config");
        if (r.empty()) {
            return;
        }
        std::string text;
        if (r.contains("file") == r.contains("text")) {
            throw ConfigError("rules: give exactly one of 'file' or 'text'");
        }
        if (r.contains("file")) {
            const fs::path path = resolve(detail::get<std::string>(r, "file", "rules"), false);
            if (!fs::exists(path)) {
                throw ConfigError("rules: file '" + path.string() + "' does not exist");
            }
            text = detail::read_file(path);
        } else {
            text = detail::get<std::string>(r, "text", "rules");
        }
        VariableTable vars;
        vars.inputs = features_;
        vars.outputs.push_back(OutputDecl{detail::get_or<std::string>(r, "output", target_, "rules"), channels_});
        for (const auto& [name, prior] : hyper_priors_) {
            vars.parameters.push_back(name);
        }
        for (const auto& [name, value] : constants_) {
            vars.parameters.push_back(name);
        }
        RuleBase rb = parse_rule_base(text, vars);
        for (const auto& [name, c] : detail::object(r, "confidence", "rules").items()) {
            const auto idx = rb.find(name);
            if (!idx) {
                throw ConfigError("rules.confidence: no rule named '" + name + "'");
            }
            rb.atoms[*idx].confidence = detail::parse_confidence(c, "rules.confidence." + name);
        }
        if (field_) {
            field_->ctx.radius = detail::get_or(detail::object(doc, "model", "config"), "radius", 1, "model");
            for (const auto& p : rb.variables.parameters) {
                const auto it = constants_.find(p);
                if (it == constants_.end()) {
                    throw ConfigError("rules: parameter '" + p + "' needs a constant");
                }
                field_->ctx.rule_parameters.push_back(it->second);
            }
        }
        rules_ = std::move(rb);
    }

    // -- fitting ------------------------------------------------------------

    [[nodiscard]] SamplerConfig sampler_config(const RulePosterior& post, std::vector<double>& init) const {
        const json& s = detail::object(cfg_.doc, "sampler", "config");
        SamplerConfig cfg;
        cfg.iterations = detail::get_or(s, "iterations", cfg.iterations, "sampler");
        cfg.burn_in = detail::get_or(s, "burn_in", cfg.burn_in, "sampler");
        cfg.thin = detail::get_or(s, "thin", cfg.thin, "sampler");
        cfg.chains = detail::get_or(s, "chains", cfg.chains, "sampler");
        cfg.parallel = detail::get_or(s, "parallel", cfg.parallel, "sampler");
        cfg.adapt = detail::get_or(s, "adapt", cfg.adapt, "sampler");
        cfg.adapt_window = detail::get_or(s, "adapt_window", cfg.adapt_window, "sampler");
        cfg.seed = seed_;
        const double scale = detail::get_or(s, "proposal_scale", 0.1, "sampler");
        const json& sd_override = detail::object(s, "proposal_sd", "sampler");
        const json& init_override = detail::object(s, "init", "sampler");
        PriorMap all = model_->priors();
        all.insert(hyper_priors_.begin(), hyper_priors_.end());
        init.clear();
        for (const auto& name : post.names()) {
            const PriorSpec& prior = all.at(name);
            cfg.proposal_sd.push_back(detail::lookup_pattern(sd_override, name, "sampler.proposal_sd")
                                          .value_or(scale * prior.spread()));
            init.push_back(detail::lookup_pattern(init_override, name, "sampler.init").value_or(prior.center()));
        }
        cfg.validate(init.size());
        return cfg;
    }

    [[nodiscard]] SimplexConfig simplex_config() const {
        const json& o = detail::object(cfg_.doc, "optimizer", "config");
        SimplexConfig cfg;
        cfg.max_evaluations = detail::get_or(o, "max_evaluations", cfg.max_evaluations, "optimizer");
        cfg.f_tol = detail::get_or(o, "f_tol", cfg.f_tol, "optimizer");
        cfg.x_tol = detail::get_or(o, "x_tol", cfg.x_tol, "optimizer");
        cfg.initial_step = detail::get_or(o, "initial_step", cfg.initial_step, "optimizer");
        cfg.validate();
        return cfg;
    }

    [[nodiscard]] KernelHyper gp_init() const {
        const json& m = detail::object(cfg_.doc, "model", "config");
        const json& init = detail::object(m, "init", "model");
        KernelHyper h;
        const auto length = detail::get_or(init, "length", std::vector<double>{1.0, 1.0, 1.0}, "model.init");
        h.length = Eigen::Map<const Eigen::VectorXd>(length.data(), static_cast<Eigen::Index>(length.size()));
        h.zeta = detail::get_or(init, "zeta", 1.0, "model.init");
        h.noise = detail::get_or(init, "noise", 0.01, "model.init");
        if (!(h.noise > 0.0)) {
            throw ConfigError("model.init: the noise must be positive for log-space fitting");
        }
        try {
            h.validate(3);
        } catch (const ValidationError& e) {
            throw ConfigError(std::string("model.init: ") + e.what());
        }
        return h;
    }

    [[nodiscard]] GpHyperPriors gp_priors() const {
        const json& p = detail::object(detail::object(cfg_.doc, "model", "config"), "priors", "model");
        GpHyperPriors out;
        if (p.contains("length")) {
            out.length = detail::parse_prior(p["length"], "model.priors.length");
        }
        if (p.contains("zeta")) {
            out.zeta = detail::parse_prior(p["zeta"], "model.priors.zeta");
        }
        if (p.contains("noise")) {
            out.noise = detail::parse_prior(p["noise"], "model.priors.noise");
        }
        return out;
    }

    // -- output -------------------------------------------------------------

    static std::string table_csv(const Dataset& ds) {
        std::string out;
        for (std::size_t j = 0; j < ds.columns.size(); ++j) {
            out += (j ? "," : "") + ds.columns[j];
        }
        out += '\n';
        for (Eigen::Index i = 0; i < ds.rows(); ++i) {
            for (Eigen::Index j = 0; j < ds.values.cols(); ++j) {
                out += (j ? "," : "") + detail::num(ds.values(i, j));
            }
            out += '\n';
        }
        return out;
    }

    static std::string samples_csv(const PosteriorSamples& ps) {
        std::string out = "chain,iteration";
        for (const auto& n : ps.names) {
            out += "," + n;
        }
        out += '\n';
        for (std::size_t c = 0; c < ps.draws.size(); ++c) {
            const auto& d = ps.draws[c];
            for (Eigen::Index r = 0; r < d.rows(); ++r) {
                out += std::to_string(c) + "," + std::to_string(ps.burn_in + r * ps.thin);
                for (Eigen::Index j = 0; j < d.cols(); ++j) {
                    out += "," + detail::num(d(r, j));
                }
                out += '\n';
            }
        }
        return out;
    }

    /// t, x_index, y_index, c for every snapshot; with a GP, the predicted mean.
    [[nodiscard]] std::string fields_csv(const GpState* state) const {
        const auto& fd = *field_;
        const int n = fd.spec.grid.n;
        std::string out = "t,x_index,y_index,c\n";
        for (const auto& s : fd.snapshots) {
            Eigen::VectorXd values(static_cast<Eigen::Index>(n) * n);
            if (state != nullptr) {
                values = state->mean(grid_points(s.time));
            } else {
                for (int i = 0; i < n; ++i) {
                    for (int j = 0; j < n; ++j) {
                        values[static_cast<Eigen::Index>(i) * n + j] = s.values(i, j);
                    }
                }
            }
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    out += detail::num(s.time) + "," + std::to_string(i) + "," + std::to_string(j) + "," +
                           detail::num(values[static_cast<Eigen::Index>(i) * n + j]) + "\n";
                }
            }
        }
        return out;
    }

    [[nodiscard]] Eigen::MatrixXd grid_points(double t) const {
        const auto& g = field_->spec.grid;
        Eigen::MatrixXd xs(static_cast<Eigen::Index>(g.n) * g.n, 3);
        for (int i = 0; i < g.n; ++i) {
            for (int j = 0; j < g.n; ++j) {
                xs.row(static_cast<Eigen::Index>(i) * g.n + j) << g.coord(i), g.coord(j), t;
            }
        }
        return xs;
    }

    [[nodiscard]] std::size_t plot_draws() const {
        const json& o = detail::object(cfg_.doc, "outputs", "config");
        return static_cast<std::size_t>(detail::get_or(o, "plot_draws", 200, "outputs"));
    }

    // -- runs ---------------------------------------------------------------

    RunResult execute(bool with_evaluation) const {
        const auto t0 = std::chrono::steady_clock::now();
        RunResult res;
        res.name = name_;
        res.out_dir = opts_.out_dir;
        json timing;
        const auto lap = [&](const char* what, auto start) {
            timing[what] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        };
        if (field_) {
            run_field(res, with_evaluation, timing, lap);
        } else {
            run_regression(res, with_evaluation, timing, lap);
        }
        res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        timing["total"] = res.wall_seconds;
        detail::write_atomic(opts_.out_dir / "timing.json", timing.dump(2) + "\n");
        return res;
    }

    template <class Lap>
    void run_regression(RunResult& res, bool with_evaluation, json& timing, const Lap& lap) const {
        (void)timing;
        const RulePosterior post = posterior();
        std::vector<double> init;
        const SamplerConfig cfg = sampler_config(post, init);
        const LogTarget target = [&post](std::span<const double> x) { return post(x); };
        auto start = std::chrono::steady_clock::now();
        FitSummary fit;
        fit.samples = detail::stage("fit", [&] { return metropolis_hastings(target, init, cfg, post.names()); });
        fit.summary = posterior_summary(fit.samples);
        lap("fit", start);

        json summary;
        summary["experiment"] = id_;
        summary["name"] = name_;
        summary["seed"] = seed_;
        summary["chains"] = cfg.chains;
        summary["iterations"] = cfg.iterations;
        summary["burn_in"] = cfg.burn_in;
        summary["thin"] = cfg.thin;
        summary["adapt"] = cfg.adapt;
        summary["retained"] = fit.samples.retained();
        summary["acceptance"] = fit.samples.acceptance;
        summary["seeds"] = fit.samples.seeds;
        summary["rules"] = rules_.has_value();
        summary["confidence"] = json{{"a", conf_.a}, {"b", conf_.b}};
        json params = json::object();
        for (const auto& s : fit.summary) {
            params[s.name] = json{{"mean", s.mean}, {"sd", s.sd}};
        }
        summary["parameters"] = params;
        if (!constants_.empty()) {
            summary["constants"] = constants_;
        }
        detail::write_atomic(opts_.out_dir / "samples.csv", samples_csv(fit.samples));
        detail::write_atomic(opts_.out_dir / "summary.json", summary.dump(2) + "\n");
        res.summary = summary;

        if (with_evaluation) {
            start = std::chrono::steady_clock::now();
            detail::stage("evaluate", [&] { evaluate_regression(fit, res); });
            lap("evaluate", start);
        }
        res.posterior = std::move(fit);
    }

    void evaluate_regression(const FitSummary& fit, RunResult& res) const {
        const Eigen::MatrixXd pooled = fit.samples.pooled();
        const auto n_model = model_->parameter_names().size();
        const PosteriorMeanPredictor mean_pred(*model_, pooled, n_model, defaults_);
        const auto predict_all = [&](const RegressionData& d) {
            Eigen::VectorXd out(d.rows());
            std::vector<double> row(static_cast<std::size_t>(d.inputs.cols()));
            for (Eigen::Index i = 0; i < d.rows(); ++i) {
                for (Eigen::Index j = 0; j < d.inputs.cols(); ++j) {
                    row[static_cast<std::size_t>(j)] = d.inputs(i, j);
                }
                out[i] = mean_pred.output(row, d.channel(i));
            }
            return out;
        };
        json metrics;
        const Eigen::VectorXd train_pred = predict_all(train_);
        metrics["train"] = detail::metrics_json(rulebayes::metrics(train_.targets, train_pred));
        metrics["train"]["rows"] = train_.rows();
        Eigen::VectorXd test_pred;
        if (test_.rows() > 0) {
            test_pred = predict_all(test_);
            metrics["test"] = detail::metrics_json(rulebayes::metrics(test_.targets, test_pred));
            metrics["test"]["rows"] = test_.rows();
        }
        if (rules_) {
            // Sampled rule bounds enter at their posterior means.
            const Eigen::VectorXd centre = pooled.colwise().mean();
            const auto params = posterior().rule_parameters(std::span<const double>(centre.data(), centre.size()));
            metrics["posterior_mean_violation_ratio"] = violation_ratio(*rules_, mean_pred, params);
            const auto counts = count_violations(*rules_, mean_pred, params);
            json per_rule = json::object();
            for (std::size_t k = 0; k < counts.size(); ++k) {
                if (rules_->included[k]) {
                    per_rule[rules_->atoms[k].name] = json{{"violated", counts[k].violated}, {"total", counts[k].total}};
                }
            }
            metrics["posterior_mean_violations"] = per_rule;
            const RulePosterior post = posterior();
            double total = 0.0;
            double satisfied = 0.0;
            const auto picks = detail::thinned_indices(static_cast<std::size_t>(pooled.rows()), 4000);
            std::vector<double> state(static_cast<std::size_t>(pooled.cols()));
            for (const std::size_t r : picks) {
                for (std::size_t j = 0; j < state.size(); ++j) {
                    state[j] = pooled(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
                }
                const ModelPredictor pred(*model_, std::span<const double>(state).first(n_model), defaults_);
                const double v = violation_ratio(*rules_, pred, post.rule_parameters(state));
                total += v;
                satisfied += v == 0.0 ? 1.0 : 0.0;
            }
            metrics["draw_violation_ratio_mean"] = total / static_cast<double>(picks.size());
            metrics["draws_satisfying_rules"] = satisfied / static_cast<double>(picks.size());
        }
        detail::write_atomic(opts_.out_dir / "metrics.json", metrics.dump(2) + "\n");
        res.metrics = metrics;

        const fs::path plot = opts_.out_dir / "plotdata";
        const auto picks = detail::thinned_indices(static_cast<std::size_t>(pooled.rows()), plot_draws());
        {
            std::string out = "draw";
            for (const auto& n : fit.samples.names) {
                out += "," + n;
            }
            out += '\n';
            for (const std::size_t r : picks) {
                out += std::to_string(r);
                for (Eigen::Index j = 0; j < pooled.cols(); ++j) {
                    out += "," + detail::num(pooled(static_cast<Eigen::Index>(r), j));
                }
                out += '\n';
            }
            detail::write_atomic(plot / "posterior_lines.csv", out);
        }
        const auto write_predictions = [&](const char* file, const RegressionData& d, const Eigen::VectorXd& pred) {
            std::string out;
            for (const auto& f : features_) {
                out += f + ",";
            }
            out += "channel,observed,predicted_mean\n";
            for (Eigen::Index i = 0; i < d.rows(); ++i) {
                for (Eigen::Index j = 0; j < d.inputs.cols(); ++j) {
                    out += detail::num(d.inputs(i, j)) + ",";
                }
                out += std::to_string(d.channel(i) + 1) + "," + detail::num(d.targets[i]) + "," +
                       detail::num(pred[i]) + "\n";
            }
            detail::write_atomic(plot / file, out);
        };
        write_predictions("train_predictions.csv", train_, train_pred);
        if (test_.rows() > 0) {
            write_predictions("test_predictions.csv", test_, test_pred);
        }
        if (const auto* spline = dynamic_cast<const BSplineModel*>(model_.get())) {
            // Per-draw curves on a 200-point grid.
            const int fine = 200;
            std::string out = "draw,channel,x,y\n";
            std::string mean_out = "channel,x,mean\n";
            const double lo = spline->spec().x_lo;
            const double hi = spline->spec().x_hi;
            std::vector<double> params(n_model);
            for (int ch = 0; ch < channels_; ++ch) {
                for (const std::size_t r : picks) {
                    for (std::size_t j = 0; j < n_model; ++j) {
                        params[j] = pooled(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
                    }
                    for (int i = 0; i < fine; ++i) {
                        const double x = lo + (hi - lo) * i / (fine - 1);
                        const std::array<double, 1> in{x};
                        out += std::to_string(r) + "," + std::to_string(ch + 1) + "," + detail::num(x) + "," +
                               detail::num(spline->predict(params, in, ch)) + "\n";
                    }
                }
                for (int i = 0; i < fine; ++i) {
                    const double x = lo + (hi - lo) * i / (fine - 1);
                    const std::array<double, 1> in{x};
                    mean_out += std::to_string(ch + 1) + "," + detail::num(x) + "," +
                                detail::num(mean_pred.output(in, ch)) + "\n";
                }
            }
            detail::write_atomic(plot / "curves.csv", out);
            detail::write_atomic(plot / "mean_curves.csv", mean_out);
        }
    }

    template <class Lap>
    void run_field(RunResult& res, bool with_evaluation, json& timing, const Lap& lap) const {
        (void)timing;
        const auto& fd = *field_;
        const SimplexConfig cfg = simplex_config();
        const KernelHyper init = gp_init();
        auto start = std::chrono::steady_clock::now();
        const MapResult map = detail::stage("fit", [&] {
            return fit_map(fd.x, fd.y, init, rules(), conf_, &fd.ctx, cfg, gp_priors());
        });
        lap("fit", start);
        json hyper{{"length", std::vector<double>(map.hyper.length.data(), map.hyper.length.data() + map.hyper.length.size())},
                   {"zeta", map.hyper.zeta},
                   {"noise", map.hyper.noise}};
        json summary;
        summary["experiment"] = id_;
        summary["name"] = name_;
        summary["seed"] = seed_;
        summary["rules"] = rules_.has_value();
        summary["confidence"] = json{{"a", conf_.a}, {"b", conf_.b}};
        summary["hyperparameters"] = hyper;
        summary["objective"] = map.objective;
        summary["log_marginal"] = map.log_marginal;
        summary["evaluations"] = map.optimizer.evaluations;
        summary["converged"] = map.optimizer.converged;
        if (!constants_.empty()) {
            summary["constants"] = constants_;
        }
        json map_doc = summary;
        map_doc["history"] = map.optimizer.history;
        detail::write_atomic(opts_.out_dir / "map.json", map_doc.dump(2) + "\n");
        detail::write_atomic(opts_.out_dir / "summary.json", summary.dump(2) + "\n");
        res.summary = summary;

        if (with_evaluation) {
            start = std::chrono::steady_clock::now();
            detail::stage("evaluate", [&] { evaluate_field(map, res); });
            lap("evaluate", start);
        }
        res.map = map;
    }

    void evaluate_field(const MapResult& map, RunResult& res) const {
        const auto& fd = *field_;
        const GpState state(fd.x, fd.y, map.hyper);
        const int n = fd.spec.grid.n;
        const int centre = n / 2;
        const std::set<int> inputs(fd.inputs.begin(), fd.inputs.end());
        std::vector<double> train_true, train_pred, test_true, test_pred;
        std::string series = "t,input,c_true,mean,lower,upper\n";
        double band = 0.0;
        int band_count = 0;
        for (std::size_t k = 0; k < fd.snapshots.size(); ++k) {
            const auto& s = fd.snapshots[k];
            const bool is_input = inputs.count(static_cast<int>(k)) != 0;
            const Predictive p = state.predict(grid_points(s.time));
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    const double m = p.mean[static_cast<Eigen::Index>(i) * n + j];
                    (is_input ? train_true : test_true).push_back(s.values(i, j));
                    (is_input ? train_pred : test_pred).push_back(m);
                }
            }
            const auto c = static_cast<Eigen::Index>(centre) * n + centre;
            const double sd = std::sqrt(p.variance[c]);
            series += detail::num(s.time) + "," + (is_input ? "1" : "0") + "," + detail::num(s.values(centre, centre)) +
                      "," + detail::num(p.mean[c]) + "," + detail::num(p.mean[c] - 2.0 * sd) + "," +
                      detail::num(p.mean[c] + 2.0 * sd) + "\n";
            if (!is_input) {
                band += 4.0 * sd;
                ++band_count;
            }
        }
        const auto vec = [](const std::vector<double>& v) {
            return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())).eval();
        };
        json metrics;
        metrics["train"] = detail::metrics_json(rulebayes::metrics(vec(train_true), vec(train_pred)));
        metrics["train"]["snapshots"] = fd.inputs.size();
        if (!test_true.empty()) {
            metrics["test"] = detail::metrics_json(rulebayes::metrics(vec(test_true), vec(test_pred)));
            metrics["test"]["snapshots"] = fd.snapshots.size() - fd.inputs.size();
            metrics["centre_band_width"] = band / band_count;
        }
        metrics["centre_index"] = centre;
        if (rules_) {
            const GpPredictor pred(state, fd.ctx);
            metrics["violation_ratio"] = violation_ratio(*rules_, pred, fd.ctx.rule_parameters);
        }
        detail::write_atomic(opts_.out_dir / "metrics.json", metrics.dump(2) + "\n");
        res.metrics = metrics;
        const fs::path plot = opts_.out_dir / "plotdata";
        detail::write_atomic(plot / "fields.csv", fields_csv(&state));
        detail::write_atomic(plot / "centre_series.csv", series);
        std::string path = "t,x,y\n";
        for (std::size_t k = 0; k < fd.snapshots.size(); ++k) {
            const auto [px, py] = fd.ctx.path.at(fd.snapshots[k].time);
            path += detail::num(fd.snapshots[k].time) + "," + detail::num(px) + "," + detail::num(py) + "\n";
        }
        detail::write_atomic(plot / "blob_path.csv", path);
    }
};

// ---------------------------------------------------------------------------
// Comparison
// ---------------------------------------------------------------------------

/// Side-by-side metrics and parameter summaries; lower error wins.
inline json compare_runs(const RunResult& a, const RunResult& b) {
    json report;
    report["a"] = json{{"name", a.name}, {"metrics", a.metrics}};
    report["b"] = json{{"name", b.name}, {"metrics", b.metrics}};
    json deltas = json::object();
    json winners = json::object();
    for (const char* split : {"train", "test"}) {
        if (!a.metrics.contains(split) || !b.metrics.contains(split)) {
            continue;
        }
        for (const char* m : {"rmse", "mse", "mae"}) {
            const double va = a.metrics[split][m].get<double>();
            const double vb = b.metrics[split][m].get<double>();
            const std::string key = std::string(split) + "." + m;
            deltas[key] = vb - va;
            winners[key] = va < vb ? "a" : vb < va ? "b" : "tie";
        }
    }
    report["metric_deltas"] = deltas;
    report["winner"] = winners;
    json params = json::object();
    const json& pa = a.summary.contains("parameters") ? a.summary["parameters"] : json::object();
    const json& pb = b.summary.contains("parameters") ? b.summary["parameters"] : json::object();
    for (const auto& [name, sa] : pa.items()) {
        if (!pb.contains(name)) {
            continue;
        }
        const json& sb = pb[name];
        params[name] = json{{"a", sa},
                            {"b", sb},
                            {"mean_delta", sb["mean"].get<double>() - sa["mean"].get<double>()},
                            {"sd_delta", sb["sd"].get<double>() - sa["sd"].get<double>()}};
    }
    report["parameters"] = params;
    return report;
}

} // namespace rulebayes::experiment
