#pragma once

// Rule bases of the form "IF <antecedents> THEN <consequents>" evaluated over
// a discretization of the rule inputs. The violation ratio is the fraction of
// discretized points whose antecedent holds but whose consequent fails.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "rulebayes/confidence.hpp"
#include "rulebayes/error.hpp"

namespace rulebayes {

// ---------------------------------------------------------------------------
// Variable declarations
// ---------------------------------------------------------------------------

struct OutputDecl {
    std::string name;
    int channels = 1;
};

/// Names a rule base may refer to. Inputs are the model inputs in the order the
/// predictor expects them; parameters are rule hyperparameters and named
/// constants, resolved from a value vector at evaluation time.
struct VariableTable {
    std::vector<std::string> inputs;
    std::vector<OutputDecl> outputs;
    std::vector<std::string> parameters;

    [[nodiscard]] std::optional<int> input_index(const std::string& name) const {
        return index_of(inputs, name);
    }
    [[nodiscard]] std::optional<int> parameter_index(const std::string& name) const {
        return index_of(parameters, name);
    }
    [[nodiscard]] const OutputDecl* output(const std::string& name) const {
        for (const auto& out : outputs) {
            if (out.name == name) {
                return &out;
            }
        }
        return nullptr;
    }

private:
    static std::optional<int> index_of(const std::vector<std::string>& names, const std::string& name) {
        const auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) {
            return std::nullopt;
        }
        return static_cast<int>(it - names.begin());
    }
};

// ---------------------------------------------------------------------------
// Expressions and predicates
// ---------------------------------------------------------------------------

enum class ExprKind {
    Constant,
    Input,     // rule-input coordinate
    Parameter, // hyperparameter or named constant
    Output,    // model output, optionally at explicit arguments
    GridMax,   // spatial summary of the model output at a time
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Abs,
};

struct Expression {
    ExprKind kind = ExprKind::Constant;
    double value = 0.0;
    std::string name;
    int slot = -1;     // input / parameter index
    int channel = 0;   // Output: 1-based channel, 0 when unindexed
    bool called = false; // Output written with an explicit argument list
    std::vector<Expression> args;

    friend bool operator==(const Expression&, const Expression&) = default;

    static Expression constant(double v) {
        Expression e;
        e.value = v;
        return e;
    }
    static Expression binary(ExprKind kind, Expression lhs, Expression rhs) {
        Expression e;
        e.kind = kind;
        e.args.push_back(std::move(lhs));
        e.args.push_back(std::move(rhs));
        return e;
    }
    static Expression unary(ExprKind kind, Expression operand) {
        Expression e;
        e.kind = kind;
        e.args.push_back(std::move(operand));
        return e;
    }

    [[nodiscard]] bool references_parameters() const {
        if (kind == ExprKind::Parameter) {
            return true;
        }
        return std::any_of(args.begin(), args.end(), [](const Expression& a) { return a.references_parameters(); });
    }
    [[nodiscard]] bool references_model() const {
        if (kind == ExprKind::Output || kind == ExprKind::GridMax) {
            return true;
        }
        return std::any_of(args.begin(), args.end(), [](const Expression& a) { return a.references_model(); });
    }
    [[nodiscard]] bool references_inputs() const {
        if (kind == ExprKind::Input) {
            return true;
        }
        return std::any_of(args.begin(), args.end(), [](const Expression& a) { return a.references_inputs(); });
    }
};

enum class PredicateKind { LE, GE, AbsDiffLE, AlwaysTrue };

/// lhs <= rhs, lhs >= rhs, |lhs - rhs| <= tolerance, or TRUE.
struct Predicate {
    PredicateKind kind = PredicateKind::AlwaysTrue;
    Expression lhs;
    Expression rhs;
    double tolerance = 0.0;

    friend bool operator==(const Predicate&, const Predicate&) = default;
};

// ---------------------------------------------------------------------------
// Discretization
// ---------------------------------------------------------------------------

struct Linspace {
    Expression lo;
    Expression hi;
    int count = 1;
    friend bool operator==(const Linspace&, const Linspace&) = default;
};

struct PointList {
    std::vector<Expression> points;
    friend bool operator==(const PointList&, const PointList&) = default;
};

struct DimensionSpec {
    std::string variable;
    int input = -1;
    std::variant<Linspace, PointList> grid;
    friend bool operator==(const DimensionSpec&, const DimensionSpec&) = default;
};

/// Cartesian product of per-dimension point sets.
struct DiscretizationSpec {
    std::vector<DimensionSpec> dims;
    friend bool operator==(const DiscretizationSpec&, const DiscretizationSpec&) = default;
};

/// n points from lo to hi inclusive; a single point sits at lo.
inline std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> pts;
    if (n <= 0) {
        return pts;
    }
    pts.reserve(static_cast<std::size_t>(n));
    if (n == 1) {
        pts.push_back(lo);
        return pts;
    }
    const double step = (hi - lo) / static_cast<double>(n - 1);
    for (int i = 0; i < n; ++i) {
        pts.push_back(lo + static_cast<double>(i) * step);
    }
    pts.back() = hi;
    return pts;
}

// ---------------------------------------------------------------------------
// Rule atoms, composition and the rule base
// ---------------------------------------------------------------------------

struct RuleAtom {
    std::string name;
    std::vector<Predicate> antecedent;
    std::vector<Predicate> consequent;
    DiscretizationSpec discretization;
    std::optional<ConfidenceSpec> confidence;

    friend bool operator==(const RuleAtom&, const RuleAtom&) = default;
};

struct Composition {
    enum class Op { Leaf, And, Or, Not };
    Op op = Op::Leaf;
    std::size_t atom = 0;
    std::vector<Composition> children;

    friend bool operator==(const Composition&, const Composition&) = default;

    [[nodiscard]] bool conjunctive() const {
        if (op == Op::Or || op == Op::Not) {
            return false;
        }
        return std::all_of(children.begin(), children.end(), [](const Composition& c) { return c.conjunctive(); });
    }
    void collect_leaves(std::vector<std::size_t>& out) const {
        if (op == Op::Leaf) {
            out.push_back(atom);
        }
        for (const auto& c : children) {
            c.collect_leaves(out);
        }
    }
};

struct RuleBase {
    VariableTable variables;
    std::vector<RuleAtom> atoms;
    Composition composition;
    std::vector<bool> included; // delta_k

    friend bool operator==(const RuleBase& l, const RuleBase& r) {
        return l.atoms == r.atoms && l.composition == r.composition && l.included == r.included;
    }

    [[nodiscard]] bool references_grid_summary() const;
    [[nodiscard]] std::optional<std::size_t> find(const std::string& atom_name) const {
        for (std::size_t i = 0; i < atoms.size(); ++i) {
            if (atoms[i].name == atom_name) {
                return i;
            }
        }
        return std::nullopt;
    }
};

// ---------------------------------------------------------------------------
// Predictor interface
// ---------------------------------------------------------------------------

/// The model seen through the rules. Implementations must be safe to call
/// concurrently through a const reference.
class Predictor {
public:
    virtual ~Predictor() = default;

    /// Model output at a full input vector for the given 0-based channel.
    [[nodiscard]] virtual double output(std::span<const double> inputs, int channel) const = 0;

    /// Values used for model inputs that a rule does not discretize.
    [[nodiscard]] virtual std::span<const double> input_defaults() const = 0;

    /// Spatial summary (maximum over the rule grid) of the output at a time.
    [[nodiscard]] virtual double grid_max(double /*time*/) const {
        throw EvaluationError("predictor does not provide a grid summary");
    }
};

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace detail {

struct EvalEnv {
    std::span<const double> inputs;
    std::span<const double> parameters;
    const Predictor* predictor = nullptr;
};

inline double evaluate(const Expression& e, const EvalEnv& env) {
    switch (e.kind) {
    case ExprKind::Constant:
        return e.value;
    case ExprKind::Input:
        return env.inputs[static_cast<std::size_t>(e.slot)];
    case ExprKind::Parameter:
        if (static_cast<std::size_t>(e.slot) >= env.parameters.size()) {
            throw EvaluationError("no value supplied for parameter '" + e.name + "'");
        }
        return env.parameters[static_cast<std::size_t>(e.slot)];
    case ExprKind::Output: {
        if (env.predictor == nullptr) {
            throw EvaluationError("model output '" + e.name + "' referenced without a predictor");
        }
        const int channel = e.channel > 0 ? e.channel - 1 : 0;
        if (!e.called) {
            return env.predictor->output(env.inputs, channel);
        }
        // Positional arguments override the leading model inputs.
        std::vector<double> point(env.inputs.begin(), env.inputs.end());
        for (std::size_t i = 0; i < e.args.size(); ++i) {
            point[i] = evaluate(e.args[i], env);
        }
        return env.predictor->output(point, channel);
    }
    case ExprKind::GridMax:
        if (env.predictor == nullptr) {
            throw EvaluationError("gridmax referenced without a predictor");
        }
        return env.predictor->grid_max(evaluate(e.args[0], env));
    case ExprKind::Add:
        return evaluate(e.args[0], env) + evaluate(e.args[1], env);
    case ExprKind::Sub:
        return evaluate(e.args[0], env) - evaluate(e.args[1], env);
    case ExprKind::Mul:
        return evaluate(e.args[0], env) * evaluate(e.args[1], env);
    case ExprKind::Div:
        return evaluate(e.args[0], env) / evaluate(e.args[1], env);
    case ExprKind::Neg:
        return -evaluate(e.args[0], env);
    case ExprKind::Abs:
        return std::abs(evaluate(e.args[0], env));
    }
    return 0.0;
}

inline bool holds(const Predicate& p, const EvalEnv& env) {
    switch (p.kind) {
    case PredicateKind::AlwaysTrue:
        return true;
    case PredicateKind::LE:
        return evaluate(p.lhs, env) <= evaluate(p.rhs, env);
    case PredicateKind::GE:
        return evaluate(p.lhs, env) >= evaluate(p.rhs, env);
    case PredicateKind::AbsDiffLE:
        return std::abs(evaluate(p.lhs, env) - evaluate(p.rhs, env)) <= p.tolerance;
    }
    return false;
}

inline bool all_hold(const std::vector<Predicate>& preds, const EvalEnv& env) {
    return std::all_of(preds.begin(), preds.end(), [&](const Predicate& p) { return holds(p, env); });
}

} // namespace detail

inline bool RuleBase::references_grid_summary() const {
    const auto uses = [](const Expression& root) {
        std::vector<const Expression*> stack{&root};
        while (!stack.empty()) {
            const Expression* e = stack.back();
            stack.pop_back();
            if (e->kind == ExprKind::GridMax) {
                return true;
            }
            for (const auto& a : e->args) {
                stack.push_back(&a);
            }
        }
        return false;
    };
    for (const auto& atom : atoms) {
        for (const auto* preds : {&atom.antecedent, &atom.consequent}) {
            for (const auto& p : *preds) {
                if (uses(p.lhs) || uses(p.rhs)) {
                    return true;
                }
            }
        }
    }
    return false;
}

/// Per-dimension point sets of an atom. Bounds may reference rule parameters,
/// which are read from `parameters`.
inline std::vector<std::vector<double>> dimension_points(const RuleAtom& atom,
                                                         std::span<const double> parameters = {}) {
    detail::EvalEnv env;
    env.parameters = parameters;
    std::vector<std::vector<double>> out;
    out.reserve(atom.discretization.dims.size());
    for (const auto& dim : atom.discretization.dims) {
        if (const auto* lin = std::get_if<Linspace>(&dim.grid)) {
            out.push_back(linspace(detail::evaluate(lin->lo, env), detail::evaluate(lin->hi, env), lin->count));
        } else {
            const auto& list = std::get<PointList>(dim.grid);
            std::vector<double> pts;
            pts.reserve(list.points.size());
            for (const auto& p : list.points) {
                pts.push_back(detail::evaluate(p, env));
            }
            out.push_back(std::move(pts));
        }
    }
    return out;
}

/// Rule-input points of an atom: the Cartesian product of its dimensions,
/// first dimension varying slowest. Each point lists one value per dimension.
inline std::vector<std::vector<double>> discretize(const RuleAtom& atom, std::span<const double> parameters = {}) {
    const auto per_dim = dimension_points(atom, parameters);
    std::vector<std::vector<double>> points;
    if (per_dim.empty()) {
        points.emplace_back();
        return points;
    }
    std::size_t total = 1;
    for (const auto& d : per_dim) {
        total *= d.size();
    }
    points.reserve(total);
    std::vector<std::size_t> idx(per_dim.size(), 0);
    for (std::size_t k = 0; k < total; ++k) {
        std::vector<double> p(per_dim.size());
        for (std::size_t d = 0; d < per_dim.size(); ++d) {
            p[d] = per_dim[d][idx[d]];
        }
        points.push_back(std::move(p));
        for (std::size_t d = per_dim.size(); d-- > 0;) {
            if (++idx[d] < per_dim[d].size()) {
                break;
            }
            idx[d] = 0;
        }
    }
    return points;
}

struct AtomCount {
    std::size_t violated = 0;
    std::size_t total = 0;
};

namespace detail {

inline std::string describe_point(const RuleAtom& atom, std::span<const double> point) {
    std::ostringstream os;
    os << "rule '" << atom.name << "' at (";
    for (std::size_t d = 0; d < point.size(); ++d) {
        os << (d ? ", " : "") << atom.discretization.dims[d].variable << "=" << point[d];
    }
    os << ")";
    return os.str();
}

} // namespace detail

/// Violated / total point counts of one atom.
inline AtomCount count_violations(const RuleAtom& atom, const Predictor& predictor,
                                  std::span<const double> parameters = {}) {
    const auto per_dim = dimension_points(atom, parameters);
    const auto defaults = predictor.input_defaults();
    std::vector<double> inputs(defaults.begin(), defaults.end());
    detail::EvalEnv env{inputs, parameters, &predictor};

    AtomCount count;
    std::size_t total = 1;
    for (const auto& d : per_dim) {
        total *= d.size();
    }
    std::vector<std::size_t> idx(per_dim.size(), 0);
    std::vector<double> point(per_dim.size());
    for (std::size_t k = 0; k < total; ++k) {
        for (std::size_t d = 0; d < per_dim.size(); ++d) {
            point[d] = per_dim[d][idx[d]];
            inputs[static_cast<std::size_t>(atom.discretization.dims[d].input)] = point[d];
        }
        try {
            if (detail::all_hold(atom.antecedent, env) && !detail::all_hold(atom.consequent, env)) {
                ++count.violated;
            }
        } catch (const std::exception& ex) {
            throw EvaluationError("evaluation failed for " + detail::describe_point(atom, point) + ": " + ex.what());
        }
        ++count.total;
        for (std::size_t d = per_dim.size(); d-- > 0;) {
            if (++idx[d] < per_dim[d].size()) {
                break;
            }
            idx[d] = 0;
        }
    }
    return count;
}

/// Counts for every atom; excluded atoms get a zero count.
inline std::vector<AtomCount> count_violations(const RuleBase& rb, const Predictor& predictor,
                                               std::span<const double> parameters = {}) {
    if (!rb.composition.conjunctive()) {
        throw ValidationError("violation ratio is defined only for AND compositions");
    }
    std::vector<AtomCount> counts(rb.atoms.size());
    for (std::size_t k = 0; k < rb.atoms.size(); ++k) {
        if (rb.included[k]) {
            counts[k] = count_violations(rb.atoms[k], predictor, parameters);
        }
    }
    return counts;
}

/// Pooled fraction of rule-input points (over all included atoms) whose
/// antecedent holds and whose consequent fails.
inline double violation_ratio(const RuleBase& rb, const Predictor& predictor, std::span<const double> parameters = {}) {
    std::size_t violated = 0;
    std::size_t total = 0;
    for (const auto& c : count_violations(rb, predictor, parameters)) {
        violated += c.violated;
        total += c.total;
    }
    if (total == 0) {
        return 0.0;
    }
    return static_cast<double>(violated) / static_cast<double>(total);
}

} // namespace rulebayes
