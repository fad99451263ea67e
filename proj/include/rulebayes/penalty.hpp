#pragma once

#include <cstddef>
#include <span>

#include "rulebayes/confidence.hpp"
#include "rulebayes/rule_engine.hpp"

namespace rulebayes {

/// log p(r | theta): the Beta confidence density evaluated at the violation
/// ratio. Atoms that carry their own ConfidenceSpec are penalized on their own
/// ratio; the remaining included atoms share `conf` on their pooled ratio.
inline double rule_log_penalty(const RuleBase& rb, const Predictor& predictor, const ConfidenceSpec& conf,
                               std::span<const double> parameters = {}) {
    const auto counts = count_violations(rb, predictor, parameters);
    double total = 0.0;
    std::size_t pooled_violated = 0;
    std::size_t pooled_total = 0;
    for (std::size_t k = 0; k < rb.atoms.size(); ++k) {
        if (!rb.included[k]) {
            continue;
        }
        const auto& c = counts[k];
        if (const auto& own = rb.atoms[k].confidence) {
            const double ratio =
                c.total == 0 ? 0.0 : static_cast<double>(c.violated) / static_cast<double>(c.total);
            total += beta_log_density(ratio, *own);
        } else {
            pooled_violated += c.violated;
            pooled_total += c.total;
        }
    }
    if (pooled_total > 0) {
        total += beta_log_density(static_cast<double>(pooled_violated) / static_cast<double>(pooled_total), conf);
    }
    return total;
}

} // namespace rulebayes
