#pragma once

// Concrete syntax for rule bases:
//
//   # comment
//   RULE r1: IF x >= 0 AND x <= 1 THEN y >= 0 AND y <= 4
//            DISCRETIZE x: linspace(0, 1, 20)
//   RULE r2: IF TRUE THEN abs(y[1](0) - y[1](2*pi)) <= 0.001
//            DISCRETIZE x: [0] CONFIDENCE beta(1, 5)
//   COMPOSE r1 AND r2
//
// Keywords are upper case. Outputs may be indexed by channel (y[2]) and
// called at explicit input values (y(0)); gridmax(t) is the spatial summary
// of the output at time t. `pi` is the only named constant.

#include <array>
#include <cctype>
#include <charconv>
#include <cstddef>
#include <set>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "rulebayes/rule_engine.hpp"

namespace rulebayes {

namespace detail {

enum class Tok { Ident, Number, Punct, End };

struct Token {
    Tok type = Tok::End;
    std::string text;
    double number = 0.0;
    std::size_t line = 1;
    std::size_t column = 1;
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        while (true) {
            skip_space();
            Token t;
            t.line = line_;
            t.column = col_;
            if (pos_ >= src_.size()) {
                t.type = Tok::End;
                out.push_back(t);
                return out;
            }
            const char c = src_[pos_];
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                const std::size_t start = pos_;
                while (pos_ < src_.size() &&
                       (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
                    advance();
                }
                t.type = Tok::Ident;
                t.text = std::string(src_.substr(start, pos_ - start));
            } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                       (c == '.' && pos_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
                t.type = Tok::Number;
                t.text = lex_number();
                const auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(), t.number);
                if (res.ec != std::errc{} || res.ptr != t.text.data() + t.text.size()) {
                    throw ParseError("malformed number '" + t.text + "'", t.line, t.column, "decimal literal");
                }
            } else if ((c == '<' || c == '>') && pos_ + 1 < src_.size() && src_[pos_ + 1] == '=') {
                t.type = Tok::Punct;
                t.text = std::string{c, '='};
                advance();
                advance();
            } else if (std::string_view(":,()[]+-*/").find(c) != std::string_view::npos) {
                t.type = Tok::Punct;
                t.text = std::string(1, c);
                advance();
            } else if (c == '<' || c == '>') {
                throw ParseError("strict inequalities are not supported", line_, col_, "'<=' or '>='");
            } else {
                throw ParseError(std::string("unexpected character '") + c + "'", line_, col_, "");
            }
            out.push_back(std::move(t));
        }
    }

private:
    void advance() {
        if (src_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    void skip_space() {
        while (pos_ < src_.size()) {
            const char c = src_[pos_];
            if (c == '#') {
                while (pos_ < src_.size() && src_[pos_] != '\n') {
                    advance();
                }
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                advance();
            } else {
                return;
            }
        }
    }

    std::string lex_number() {
        const std::size_t start = pos_;
        const auto digits = [&] {
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                advance();
            }
        };
        digits();
        if (pos_ < src_.size() && src_[pos_] == '.') {
            advance();
            digits();
        }
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            const std::size_t save = pos_;
            const std::size_t save_col = col_;
            advance();
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) {
                advance();
            }
            if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                digits();
            } else {
                pos_ = save;
                col_ = save_col;
            }
        }
        return std::string(src_.substr(start, pos_ - start));
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
    std::size_t col_ = 1;
};

inline bool is_keyword(const std::string& s) {
    static const std::set<std::string> keywords{"RULE", "IF",   "THEN",       "AND",  "OR",  "NOT",
                                                "TRUE", "COMPOSE", "DISCRETIZE", "CONFIDENCE"};
    return keywords.count(s) != 0;
}

class Parser {
public:
    Parser(std::string_view text, const VariableTable& vars) : tokens_(Lexer(text).run()), vars_(vars) {}

    RuleBase run() {
        RuleBase rb;
        rb.variables = vars_;
        bool composed = false;
        std::vector<std::pair<std::string, Token>> compose_refs;
        Composition composition;
        while (peek().type != Tok::End) {
            if (accept_ident("RULE")) {
                RuleAtom atom = parse_rule();
                for (const auto& existing : rb.atoms) {
                    if (existing.name == atom.name) {
                        throw ValidationError("duplicate rule name '" + atom.name + "'");
                    }
                }
                rb.atoms.push_back(std::move(atom));
            } else if (peek().type == Tok::Ident && peek().text == "COMPOSE") {
                const Token kw = next();
                if (composed) {
                    throw ParseError("more than one COMPOSE statement", kw.line, kw.column, "");
                }
                composed = true;
                composition = parse_or(compose_refs);
            } else {
                fail("RULE or COMPOSE");
            }
        }
        if (!composed) {
            throw ValidationError("empty composition: no COMPOSE statement");
        }
        // Resolve composition leaves now that every rule is known.
        std::vector<Composition*> stack{&composition};
        std::vector<Composition*> leaves;
        while (!stack.empty()) {
            Composition* c = stack.back();
            stack.pop_back();
            if (c->op == Composition::Op::Leaf) {
                leaves.push_back(c);
            }
            for (auto it = c->children.rbegin(); it != c->children.rend(); ++it) {
                stack.push_back(&*it);
            }
        }
        rb.included.assign(rb.atoms.size(), false);
        for (Composition* c : leaves) {
            const auto& [name, tok] = compose_refs[c->atom];
            const auto idx = rb.find(name);
            if (!idx) {
                throw ValidationError("unknown rule '" + name + "' in COMPOSE at line " + std::to_string(tok.line) +
                                      ", column " + std::to_string(tok.column));
            }
            if (rb.included[*idx]) {
                throw ValidationError("rule '" + name + "' appears more than once in COMPOSE");
            }
            rb.included[*idx] = true;
            c->atom = *idx;
        }
        rb.composition = std::move(composition);
        return rb;
    }

private:
    // -- token helpers ------------------------------------------------------
    const Token& peek(std::size_t ahead = 0) const {
        return tokens_[std::min(pos_ + ahead, tokens_.size() - 1)];
    }
    Token next() {
        Token t = peek();
        if (pos_ < tokens_.size() - 1) {
            ++pos_;
        }
        return t;
    }
    [[noreturn]] void fail(const std::string& expected) const {
        const Token& t = peek();
        const std::string found = t.type == Tok::End ? "end of input" : "'" + t.text + "'";
        throw ParseError("unexpected " + found, t.line, t.column, expected);
    }
    bool accept_ident(std::string_view word) {
        if (peek().type == Tok::Ident && peek().text == word) {
            next();
            return true;
        }
        return false;
    }
    bool accept_punct(std::string_view p) {
        if (peek().type == Tok::Punct && peek().text == p) {
            next();
            return true;
        }
        return false;
    }
    void expect_ident(std::string_view word) {
        if (!accept_ident(word)) {
            fail("'" + std::string(word) + "'");
        }
    }
    void expect_punct(std::string_view p) {
        if (!accept_punct(p)) {
            fail("'" + std::string(p) + "'");
        }
    }
    Token expect_name(const std::string& what) {
        if (peek().type != Tok::Ident || is_keyword(peek().text)) {
            fail(what);
        }
        return next();
    }

    // -- statements ---------------------------------------------------------
    RuleAtom parse_rule() {
        RuleAtom atom;
        atom.name = expect_name("rule name").text;
        expect_punct(":");
        expect_ident("IF");
        atom.antecedent = parse_conjunction();
        expect_ident("THEN");
        atom.consequent = parse_conjunction();
        expect_ident("DISCRETIZE");
        atom.discretization = parse_discretization();
        if (accept_ident("CONFIDENCE")) {
            const Token kw = expect_name("'beta'");
            if (kw.text != "beta") {
                throw ParseError("unknown confidence family '" + kw.text + "'", kw.line, kw.column, "'beta'");
            }
            expect_punct("(");
            const Token a_tok = peek();
            const double a = parse_constant_expr("shape a");
            expect_punct(",");
            const double b = parse_constant_expr("shape b");
            expect_punct(")");
            if (!(a > 0.0) || !(b > 0.0)) {
                throw ParseError("confidence shapes must be positive", a_tok.line, a_tok.column, "");
            }
            atom.confidence = ConfidenceSpec(a, b);
        }
        // Inputs used by the rule must be discretized, otherwise they would
        // silently take the predictor defaults.
        for (const auto* preds : {&atom.antecedent, &atom.consequent}) {
            for (const auto& p : *preds) {
                check_inputs_discretized(p.lhs, atom);
                check_inputs_discretized(p.rhs, atom);
            }
        }
        return atom;
    }

    void check_inputs_discretized(const Expression& e, const RuleAtom& atom) const {
        if (e.kind == ExprKind::Input) {
            const bool found = std::any_of(atom.discretization.dims.begin(), atom.discretization.dims.end(),
                                           [&](const DimensionSpec& d) { return d.input == e.slot; });
            if (!found) {
                throw ValidationError("rule '" + atom.name + "' uses input '" + e.name +
                                      "' without discretizing it");
            }
        }
        for (const auto& a : e.args) {
            check_inputs_discretized(a, atom);
        }
    }

    std::vector<Predicate> parse_conjunction() {
        std::vector<Predicate> preds;
        preds.push_back(parse_predicate());
        while (accept_ident("AND")) {
            preds.push_back(parse_predicate());
        }
        return preds;
    }

    Predicate parse_predicate() {
        Predicate p;
        if (accept_ident("TRUE")) {
            p.kind = PredicateKind::AlwaysTrue;
            return p;
        }
        Expression lhs = parse_expr();
        if (accept_punct("<=")) {
            p.kind = PredicateKind::LE;
        } else if (accept_punct(">=")) {
            p.kind = PredicateKind::GE;
        } else {
            fail("'<=' or '>='");
        }
        Expression rhs = parse_expr();
        // |a - b| <= tol with a constant tolerance is an approximate-equality rule.
        if (p.kind == PredicateKind::LE && lhs.kind == ExprKind::Abs && lhs.args[0].kind == ExprKind::Sub &&
            rhs.kind == ExprKind::Constant && rhs.value >= 0.0) {
            p.kind = PredicateKind::AbsDiffLE;
            p.tolerance = rhs.value;
            p.lhs = std::move(lhs.args[0].args[0]);
            p.rhs = std::move(lhs.args[0].args[1]);
            return p;
        }
        p.lhs = std::move(lhs);
        p.rhs = std::move(rhs);
        return p;
    }

    DiscretizationSpec parse_discretization() {
        DiscretizationSpec spec;
        do {
            DimensionSpec dim;
            const Token name = expect_name("input variable");
            const auto idx = vars_.input_index(name.text);
            if (!idx) {
                throw ValidationError("unknown variable '" + name.text + "' in DISCRETIZE at line " +
                                      std::to_string(name.line) + ", column " + std::to_string(name.column));
            }
            for (const auto& d : spec.dims) {
                if (d.input == *idx) {
                    throw ValidationError("input '" + name.text + "' discretized twice");
                }
            }
            dim.variable = name.text;
            dim.input = *idx;
            expect_punct(":");
            if (accept_ident("linspace")) {
                Linspace lin;
                expect_punct("(");
                lin.lo = parse_bound_expr();
                expect_punct(",");
                lin.hi = parse_bound_expr();
                expect_punct(",");
                const Token count = peek();
                if (count.type != Tok::Number) {
                    fail("point count");
                }
                next();
                if (count.number != std::floor(count.number) || count.number < 0 || count.number > 1e7) {
                    throw ParseError("point count must be a non-negative integer", count.line, count.column, "");
                }
                lin.count = static_cast<int>(count.number);
                if (lin.count == 0) {
                    throw ValidationError("discretization of '" + dim.variable + "' has zero points");
                }
                expect_punct(")");
                if (!lin.lo.references_parameters() && !lin.hi.references_parameters()) {
                    detail::EvalEnv env;
                    if (detail::evaluate(lin.lo, env) > detail::evaluate(lin.hi, env)) {
                        throw ValidationError("discretization of '" + dim.variable + "' has lo > hi");
                    }
                }
                dim.grid = std::move(lin);
            } else if (accept_punct("[")) {
                PointList list;
                list.points.push_back(parse_bound_expr());
                while (accept_punct(",")) {
                    list.points.push_back(parse_bound_expr());
                }
                expect_punct("]");
                dim.grid = std::move(list);
            } else {
                fail("'linspace(' or '['");
            }
            spec.dims.push_back(std::move(dim));
        } while (accept_punct(","));
        return spec;
    }

    // Discretization bounds: constants and rule parameters only.
    Expression parse_bound_expr() {
        const Token start = peek();
        Expression e = parse_expr();
        if (e.references_model() || e.references_inputs()) {
            throw ParseError("discretization bounds may only use constants and parameters", start.line,
                             start.column, "constant expression");
        }
        return e;
    }

    double parse_constant_expr(const std::string& what) {
        const Token start = peek();
        Expression e = parse_expr();
        if (e.references_model() || e.references_inputs() || e.references_parameters()) {
            throw ParseError(what + " must be a constant", start.line, start.column, "number");
        }
        return detail::evaluate(e, detail::EvalEnv{});
    }

    // -- COMPOSE ------------------------------------------------------------
    Composition parse_or(std::vector<std::pair<std::string, Token>>& refs) {
        Composition first = parse_and(refs);
        if (!(peek().type == Tok::Ident && peek().text == "OR")) {
            return first;
        }
        Composition node;
        node.op = Composition::Op::Or;
        node.children.push_back(std::move(first));
        while (accept_ident("OR")) {
            node.children.push_back(parse_and(refs));
        }
        return node;
    }
    Composition parse_and(std::vector<std::pair<std::string, Token>>& refs) {
        Composition first = parse_not(refs);
        if (!(peek().type == Tok::Ident && peek().text == "AND")) {
            return first;
        }
        Composition node;
        node.op = Composition::Op::And;
        node.children.push_back(std::move(first));
        while (accept_ident("AND")) {
            node.children.push_back(parse_not(refs));
        }
        return node;
    }
    Composition parse_not(std::vector<std::pair<std::string, Token>>& refs) {
        if (accept_ident("NOT")) {
            Composition node;
            node.op = Composition::Op::Not;
            node.children.push_back(parse_not(refs));
            return node;
        }
        if (accept_punct("(")) {
            Composition inner = parse_or(refs);
            expect_punct(")");
            return inner;
        }
        const Token name = expect_name("rule name");
        Composition leaf;
        leaf.op = Composition::Op::Leaf;
        leaf.atom = refs.size();
        refs.emplace_back(name.text, name);
        return leaf;
    }

    // -- arithmetic -----------------------------------------------------------
    Expression parse_expr() {
        Expression lhs = parse_term();
        while (true) {
            if (accept_punct("+")) {
                lhs = Expression::binary(ExprKind::Add, std::move(lhs), parse_term());
            } else if (accept_punct("-")) {
                lhs = Expression::binary(ExprKind::Sub, std::move(lhs), parse_term());
            } else {
                return lhs;
            }
        }
    }
    Expression parse_term() {
        Expression lhs = parse_unary();
        while (true) {
            if (accept_punct("*")) {
                lhs = Expression::binary(ExprKind::Mul, std::move(lhs), parse_unary());
            } else if (accept_punct("/")) {
                lhs = Expression::binary(ExprKind::Div, std::move(lhs), parse_unary());
            } else {
                return lhs;
            }
        }
    }
    Expression parse_unary() {
        if (accept_punct("-")) {
            if (peek().type == Tok::Number) {
                return Expression::constant(-next().number);
            }
            return Expression::unary(ExprKind::Neg, parse_unary());
        }
        return parse_primary();
    }
    Expression parse_primary() {
        const Token t = peek();
        if (t.type == Tok::Number) {
            next();
            return Expression::constant(t.number);
        }
        if (accept_punct("(")) {
            Expression inner = parse_expr();
            expect_punct(")");
            return inner;
        }
        if (t.type != Tok::Ident || is_keyword(t.text)) {
            fail("expression");
        }
        next();
        if (t.text == "pi") {
            return Expression::constant(std::numbers::pi);
        }
        if (t.text == "abs") {
            expect_punct("(");
            Expression e = Expression::unary(ExprKind::Abs, parse_expr());
            expect_punct(")");
            return e;
        }
        if (t.text == "gridmax") {
            expect_punct("(");
            Expression e = Expression::unary(ExprKind::GridMax, parse_expr());
            expect_punct(")");
            return e;
        }
        if (const OutputDecl* out = vars_.output(t.text)) {
            Expression e;
            e.kind = ExprKind::Output;
            e.name = t.text;
            if (accept_punct("[")) {
                const Token ch = peek();
                if (ch.type != Tok::Number || ch.number != std::floor(ch.number)) {
                    fail("channel index");
                }
                next();
                e.channel = static_cast<int>(ch.number);
                if (e.channel < 1 || e.channel > out->channels) {
                    throw ValidationError("channel " + ch.text + " of output '" + t.text + "' out of range 1.." +
                                          std::to_string(out->channels));
                }
                expect_punct("]");
            }
            if (accept_punct("(")) {
                e.called = true;
                if (!accept_punct(")")) {
                    e.args.push_back(parse_expr());
                    while (accept_punct(",")) {
                        e.args.push_back(parse_expr());
                    }
                    expect_punct(")");
                }
                if (e.args.size() > vars_.inputs.size()) {
                    throw ValidationError("output '" + t.text + "' called with too many arguments");
                }
            }
            return e;
        }
        if (const auto idx = vars_.input_index(t.text)) {
            Expression e;
            e.kind = ExprKind::Input;
            e.name = t.text;
            e.slot = *idx;
            return e;
        }
        if (const auto idx = vars_.parameter_index(t.text)) {
            Expression e;
            e.kind = ExprKind::Parameter;
            e.name = t.text;
            e.slot = *idx;
            return e;
        }
        throw ValidationError("unknown variable '" + t.text + "' at line " + std::to_string(t.line) + ", column " +
                              std::to_string(t.column));
    }

    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
    const VariableTable& vars_;
};

inline std::string format_number(double v) {
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

inline std::string serialize(const Expression& e) {
    const auto bin = [&](const char* op) {
        return "(" + serialize(e.args[0]) + " " + op + " " + serialize(e.args[1]) + ")";
    };
    switch (e.kind) {
    case ExprKind::Constant:
        return format_number(e.value);
    case ExprKind::Input:
    case ExprKind::Parameter:
        return e.name;
    case ExprKind::Output: {
        std::string s = e.name;
        if (e.channel > 0) {
            s += "[" + std::to_string(e.channel) + "]";
        }
        if (e.called) {
            s += "(";
            for (std::size_t i = 0; i < e.args.size(); ++i) {
                s += (i ? ", " : "") + serialize(e.args[i]);
            }
            s += ")";
        }
        return s;
    }
    case ExprKind::GridMax:
        return "gridmax(" + serialize(e.args[0]) + ")";
    case ExprKind::Add:
        return bin("+");
    case ExprKind::Sub:
        return bin("-");
    case ExprKind::Mul:
        return bin("*");
    case ExprKind::Div:
        return bin("/");
    case ExprKind::Neg:
        return "-(" + serialize(e.args[0]) + ")";
    case ExprKind::Abs:
        return "abs(" + serialize(e.args[0]) + ")";
    }
    return {};
}

inline std::string serialize(const Predicate& p) {
    switch (p.kind) {
    case PredicateKind::AlwaysTrue:
        return "TRUE";
    case PredicateKind::LE:
        return serialize(p.lhs) + " <= " + serialize(p.rhs);
    case PredicateKind::GE:
        return serialize(p.lhs) + " >= " + serialize(p.rhs);
    case PredicateKind::AbsDiffLE:
        return "abs(" + serialize(p.lhs) + " - " + serialize(p.rhs) + ") <= " + format_number(p.tolerance);
    }
    return {};
}

inline std::string serialize(const Composition& c, const std::vector<RuleAtom>& atoms) {
    switch (c.op) {
    case Composition::Op::Leaf:
        return atoms[c.atom].name;
    case Composition::Op::Not:
        return "NOT " + serialize(c.children[0], atoms);
    case Composition::Op::And:
    case Composition::Op::Or: {
        const char* op = c.op == Composition::Op::And ? " AND " : " OR ";
        std::string s = "(";
        for (std::size_t i = 0; i < c.children.size(); ++i) {
            s += (i ? op : "") + serialize(c.children[i], atoms);
        }
        return s + ")";
    }
    }
    return {};
}

} // namespace detail

/// Parses rule-DSL text, resolving every name against `vars`.
inline RuleBase parse_rule_base(std::string_view text, const VariableTable& vars) {
    return detail::Parser(text, vars).run();
}

/// Canonical DSL text; parse_rule_base(serialize(rb), rb.variables) == rb.
inline std::string serialize(const RuleBase& rb) {
    std::string out;
    for (const auto& atom : rb.atoms) {
        out += "RULE " + atom.name + ": IF ";
        for (std::size_t i = 0; i < atom.antecedent.size(); ++i) {
            out += (i ? " AND " : "") + detail::serialize(atom.antecedent[i]);
        }
        out += " THEN ";
        for (std::size_t i = 0; i < atom.consequent.size(); ++i) {
            out += (i ? " AND " : "") + detail::serialize(atom.consequent[i]);
        }
        out += " DISCRETIZE ";
        for (std::size_t d = 0; d < atom.discretization.dims.size(); ++d) {
            const auto& dim = atom.discretization.dims[d];
            out += (d ? ", " : "") + dim.variable + ": ";
            if (const auto* lin = std::get_if<Linspace>(&dim.grid)) {
                out += "linspace(" + detail::serialize(lin->lo) + ", " + detail::serialize(lin->hi) + ", " +
                       std::to_string(lin->count) + ")";
            } else {
                const auto& pts = std::get<PointList>(dim.grid).points;
                out += "[";
                for (std::size_t i = 0; i < pts.size(); ++i) {
                    out += (i ? ", " : "") + detail::serialize(pts[i]);
                }
                out += "]";
            }
        }
        if (atom.confidence) {
            out += " CONFIDENCE beta(" + detail::format_number(atom.confidence->a) + ", " +
                   detail::format_number(atom.confidence->b) + ")";
        }
        out += "\n";
    }
    out += "COMPOSE " + detail::serialize(rb.composition, rb.atoms) + "\n";
    return out;
}

} // namespace rulebayes
