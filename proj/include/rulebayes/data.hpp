#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rulebayes/error.hpp"
#include "rulebayes/field.hpp"

namespace rulebayes {

/// Rectangular numeric table with named columns.
struct Dataset {
    std::vector<std::string> columns;
    Eigen::MatrixXd values; // rows x columns
    std::string target;
    std::size_t dropped = 0; // rows discarded during ingestion

    [[nodiscard]] Eigen::Index rows() const noexcept { return values.rows(); }

    [[nodiscard]] Eigen::Index index(const std::string& name) const {
        const auto it = std::find(columns.begin(), columns.end(), name);
        if (it == columns.end()) {
            throw ValidationError("dataset has no column '" + name + "'");
        }
        return static_cast<Eigen::Index>(it - columns.begin());
    }

    [[nodiscard]] Eigen::VectorXd column(const std::string& name) const { return values.col(index(name)); }

    [[nodiscard]] Eigen::MatrixXd select(const std::vector<std::string>& names) const {
        Eigen::MatrixXd out(rows(), static_cast<Eigen::Index>(names.size()));
        for (std::size_t j = 0; j < names.size(); ++j) {
            out.col(static_cast<Eigen::Index>(j)) = column(names[j]);
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

struct LinearGenSpec {
    int points = 500;
    double x_lo = 0.0;
    double x_hi = 10.0;
    double intercept = 1.0;
    double slope = 2.0;
    double noise_sd = 3.0;
    double observed_lo = 4.0;
    double observed_hi = 5.0;
};

struct LinearData {
    Dataset full;
    Dataset observed;
};

/// y = intercept + slope x + N(0, noise^2) at uniform x; the observed subset
/// keeps observed_lo <= x <= observed_hi.
inline LinearData gen_linear(std::uint64_t seed, const LinearGenSpec& spec = {}) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(spec.x_lo, spec.x_hi);
    std::normal_distribution<double> noise(0.0, 1.0);
    LinearData out;
    out.full.columns = {"x", "y"};
    out.full.target = "y";
    out.full.values.resize(spec.points, 2);
    std::vector<Eigen::Index> kept;
    for (int i = 0; i < spec.points; ++i) {
        const double x = ux(rng);
        const double e = noise(rng);
        out.full.values(i, 0) = x;
        out.full.values(i, 1) = spec.intercept + spec.slope * x + spec.noise_sd * e;
        if (x >= spec.observed_lo && x <= spec.observed_hi) {
            kept.push_back(i);
        }
    }
    out.observed.columns = out.full.columns;
    out.observed.target = "y";
    out.observed.values = out.full.values(kept, Eigen::all);
    return out;
}

struct SurrogateGenSpec {
    int points = 32;
    std::vector<double> times{1.0, 2.0, 3.0};
    double amplitude = 0.01;
    double noise_sd = 0.002;
    double phase = std::numbers::pi;
};

/// amplitude * t * sin(phase - x). With the default phase this is
/// amplitude * t * sin(x), and it is exactly zero at x = phase.
inline double advection_surrogate_value(const SurrogateGenSpec& spec, double x, double t) {
    return spec.amplitude * t * std::sin(spec.phase - x);
}

/// The surrogate on `points` equally spaced x in [0, 2 pi] per snapshot, plus
/// N(0, noise^2). Columns: x, t, snapshot (1-based), y.
inline Dataset gen_advection_surrogate(std::uint64_t seed, const SurrogateGenSpec& spec = {}) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    Dataset ds;
    ds.columns = {"x", "t", "snapshot", "y"};
    ds.target = "y";
    const auto n_rows = static_cast<Eigen::Index>(spec.points) * static_cast<Eigen::Index>(spec.times.size());
    ds.values.resize(n_rows, 4);
    Eigen::Index row = 0;
    for (std::size_t s = 0; s < spec.times.size(); ++s) {
        const double t = spec.times[s];
        for (int i = 0; i < spec.points; ++i) {
            const double x = spec.points == 1 ? 0.0
                                              : 2.0 * std::numbers::pi * static_cast<double>(i) /
                                                    static_cast<double>(spec.points - 1);
            ds.values(row, 0) = x;
            ds.values(row, 1) = t;
            ds.values(row, 2) = static_cast<double>(s + 1);
            ds.values(row, 3) = advection_surrogate_value(spec, x, t) + spec.noise_sd * noise(rng);
            ++row;
        }
    }
    return ds;
}

struct AdvectionDiffusionSpec {
    SpatialGrid grid{24, 2.0 * std::numbers::pi};
    int snapshots = 150;
    double dt = 35.11 / 149.0;
    double x0 = 5.0;
    double y0 = 5.0;
    double variance0 = 0.1;
    double u = -0.1;
    double v = -0.1;
    double diffusion = 0.02;
    double mass = 1.0; // total mass of the Gaussian blob
};

/// Exact unbounded-domain solution: a Gaussian of variance variance0 + 2 D t
/// centred at (x0 + u t, y0 + v t) carrying constant mass.
inline double advection_diffusion_value(const AdvectionDiffusionSpec& spec, double x, double y, double t) {
    const double var = spec.variance0 + 2.0 * spec.diffusion * t;
    const double dx = x - (spec.x0 + spec.u * t);
    const double dy = y - (spec.y0 + spec.v * t);
    return spec.mass / (2.0 * std::numbers::pi * var) * std::exp(-(dx * dx + dy * dy) / (2.0 * var));
}

inline std::vector<FieldSnapshot> gen_advection_diffusion(const AdvectionDiffusionSpec& spec = {}) {
    if (spec.grid.n < 4 || spec.snapshots < 2) {
        throw ValidationError("advection-diffusion needs n >= 4 and at least two snapshots");
    }
    std::vector<FieldSnapshot> out;
    for (int k = 0; k < spec.snapshots; ++k) {
        FieldSnapshot s;
        s.time = static_cast<double>(k) * spec.dt;
        s.values.resize(spec.grid.n, spec.grid.n);
        for (int i = 0; i < spec.grid.n; ++i) {
            for (int j = 0; j < spec.grid.n; ++j) {
                s.values(i, j) = advection_diffusion_value(spec, spec.grid.coord(i), spec.grid.coord(j), s.time);
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cell += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cell));
            cell.clear();
        } else {
            cell += c;
        }
    }
    cells.push_back(std::move(cell));
    return cells;
}

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

inline bool parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') {
        s.remove_prefix(1);
    }
    if (s.empty()) {
        return false;
    }
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

} // namespace detail

/// Parses CSV text with a header row. Rows with missing or non-numeric cells
/// are dropped and counted.
inline Dataset parse_csv(std::string_view text, const std::string& target) {
    std::istringstream in{std::string(text)};
    std::string line;
    Dataset ds;
    bool header = false;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) {
            continue;
        }
        if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
            line.erase(0, 3);
        }
        for (const auto& c : detail::split_csv_line(line)) {
            ds.columns.emplace_back(detail::trim(c));
        }
        header = true;
        break;
    }
    if (!header) {
        throw IoError("CSV has no header row");
    }
    if (std::find(ds.columns.begin(), ds.columns.end(), target) == ds.columns.end()) {
        throw ValidationError("target column '" + target + "' is not in the CSV header");
    }
    ds.target = target;
    std::vector<double> flat;
    std::vector<double> row(ds.columns.size());
    Eigen::Index n = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) {
            continue;
        }
        const auto cells = detail::split_csv_line(line);
        bool ok = cells.size() == ds.columns.size();
        for (std::size_t j = 0; ok && j < cells.size(); ++j) {
            ok = detail::parse_double(cells[j], row[j]);
        }
        if (!ok) {
            ++ds.dropped;
            continue;
        }
        flat.insert(flat.end(), row.begin(), row.end());
        ++n;
    }
    if (n == 0) {
        throw ValidationError("CSV has no usable rows");
    }
    ds.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        flat.data(), n, static_cast<Eigen::Index>(ds.columns.size()));
    return ds;
}

inline Dataset load_csv(const std::string& path, const std::string& target) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_csv(buf.str(), target);
}

enum class CompareOp { GE, GT, LE, LT };

inline CompareOp parse_compare_op(std::string_view s) {
    if (s == ">=" || s == "GE" || s == "ge") {
        return CompareOp::GE;
    }
    if (s == ">" || s == "GT" || s == "gt") {
        return CompareOp::GT;
    }
    if (s == "<=" || s == "LE" || s == "le") {
        return CompareOp::LE;
    }
    if (s == "<" || s == "LT" || s == "lt") {
        return CompareOp::LT;
    }
    throw ConfigError("unknown comparison '" + std::string(s) + "'");
}

/// Splits into (rows satisfying `column op threshold`, the rest), order kept.
inline std::pair<Dataset, Dataset> filter_rows(const Dataset& ds, const std::string& column, CompareOp op,
                                               double threshold) {
    const Eigen::Index c = ds.index(column);
    std::vector<Eigen::Index> kept;
    std::vector<Eigen::Index> held;
    for (Eigen::Index i = 0; i < ds.rows(); ++i) {
        const double v = ds.values(i, c);
        bool keep = false;
        switch (op) {
        case CompareOp::GE:
            keep = v >= threshold;
            break;
        case CompareOp::GT:
            keep = v > threshold;
            break;
        case CompareOp::LE:
            keep = v <= threshold;
            break;
        case CompareOp::LT:
            keep = v < threshold;
            break;
        }
        (keep ? kept : held).push_back(i);
    }
    std::pair<Dataset, Dataset> out{ds, ds};
    out.first.values = ds.values(kept, Eigen::all);
    out.second.values = ds.values(held, Eigen::all);
    return out;
}

/// Linear-interpolation percentile with rank h = (n - 1) p / 100.
inline double percentile(std::vector<double> values, double p) {
    if (values.empty()) {
        throw ValidationError("percentile of an empty column");
    }
    if (!(p >= 0.0 && p <= 100.0)) {
        throw ValidationError("percentile must lie in [0, 100]");
    }
    std::sort(values.begin(), values.end());
    const double h = static_cast<double>(values.size() - 1) * p / 100.0;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= values.size()) {
        return values.back();
    }
    return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

inline double percentile(const Dataset& ds, const std::string& column, double p) {
    const Eigen::VectorXd c = ds.column(column);
    return percentile(std::vector<double>(c.data(), c.data() + c.size()), p);
}

struct Metrics {
    double rmse = 0.0;
    double mse = 0.0;
    double mae = 0.0;
};

inline Metrics metrics(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred) {
    if (y_true.size() != y_pred.size() || y_true.size() == 0) {
        throw ValidationError("metrics need two non-empty vectors of equal length");
    }
    const Eigen::ArrayXd r = (y_true - y_pred).array();
    Metrics m;
    m.mse = r.square().mean();
    m.rmse = std::sqrt(m.mse);
    m.mae = r.abs().mean();
    return m;
}

} // namespace rulebayes
