#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rulebayes {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed rule-DSL text. Carries the 1-based source position and what the
/// parser expected to see there.
class ParseError : public Error {
public:
    ParseError(const std::string& message, std::size_t line, std::size_t column, std::string expected)
        : Error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + message +
                (expected.empty() ? std::string{} : " (expected " + expected + ")")),
          line_(line), column_(column), expected_(std::move(expected)) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }
    [[nodiscard]] std::size_t column() const noexcept { return column_; }
    [[nodiscard]] const std::string& expected() const noexcept { return expected_; }

private:
    std::size_t line_;
    std::size_t column_;
    std::string expected_;
};

/// Structurally well-formed input that violates a semantic constraint
/// (unknown variable, undefined rule, empty composition, bad sizes, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Failure while evaluating a rule base against a predictor.
class EvaluationError : public Error {
public:
    using Error::Error;
};

/// Numerical breakdown: NaN targets, failed factorizations.
class NumericalError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace rulebayes
