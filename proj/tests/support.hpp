#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "rulebayes/rule_engine.hpp"

namespace testing_support {

/// Predictor backed by a plain function of (inputs, channel).
class FnPredictor final : public rulebayes::Predictor {
public:
    using Fn = std::function<double(std::span<const double>, int)>;

    FnPredictor(Fn fn, std::vector<double> defaults) : fn_(std::move(fn)), defaults_(std::move(defaults)) {}

    [[nodiscard]] double output(std::span<const double> inputs, int channel) const override {
        return fn_(inputs, channel);
    }
    [[nodiscard]] std::span<const double> input_defaults() const override { return defaults_; }

private:
    Fn fn_;
    std::vector<double> defaults_;
};

/// Simpson's rule on [a, b] with an even number of panels.
template <typename F>
double simpson(F&& f, double a, double b, int panels) {
    const double h = (b - a) / panels;
    double s = f(a) + f(b);
    for (int i = 1; i < panels; ++i) {
        s += f(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
    }
    return s * h / 3.0;
}

} // namespace testing_support
