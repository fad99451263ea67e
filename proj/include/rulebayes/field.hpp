#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rulebayes/error.hpp"

namespace rulebayes {

/// n x n periodic grid on [0, length)^2 with nodes at i * length / n.
struct SpatialGrid {
    int n = 24;
    double length = 2.0 * std::numbers::pi;

    [[nodiscard]] double spacing() const noexcept { return length / static_cast<double>(n); }
    [[nodiscard]] double coord(int i) const noexcept { return static_cast<double>(i) * spacing(); }
    [[nodiscard]] double cell_area() const noexcept { return spacing() * spacing(); }

    /// Index of the node nearest to a coordinate, clamped to the grid.
    [[nodiscard]] int nearest(double x) const noexcept {
        const auto i = static_cast<int>(std::lround(x / spacing()));
        return std::clamp(i, 0, n - 1);
    }
};

/// Concentration on a SpatialGrid; values(i, j) sits at (coord(i), coord(j)).
struct FieldSnapshot {
    double time = 0.0;
    Eigen::MatrixXd values;

    /// Row-major argmax; ties go to the lowest (i * n + j).
    [[nodiscard]] std::pair<int, int> argmax() const {
        if (values.size() == 0) {
            throw ValidationError("argmax of an empty field");
        }
        int bi = 0;
        int bj = 0;
        for (Eigen::Index i = 0; i < values.rows(); ++i) {
            for (Eigen::Index j = 0; j < values.cols(); ++j) {
                if (values(i, j) > values(bi, bj)) {
                    bi = static_cast<int>(i);
                    bj = static_cast<int>(j);
                }
            }
        }
        return {bi, bj};
    }
};

} // namespace rulebayes
