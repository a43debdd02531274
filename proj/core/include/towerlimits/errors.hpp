#pragma once

#include <stdexcept>
#include <string>

namespace towerlimits {

// Bad arguments to a library call (dimension mismatch, out-of-range input).
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed text input. Line and column are 1-based; 0 means unknown.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, int line = 0, int column = 0)
        : std::runtime_error(format(what, line, column)), line_(line), column_(column) {}

    int line() const noexcept { return line_; }
    int column() const noexcept { return column_; }

private:
    static std::string format(const std::string& what, int line, int column) {
        if (line <= 0) return what;
        return std::to_string(line) + ":" + std::to_string(column) + ": " + what;
    }
    int line_;
    int column_;
};

// An algorithm did not reach its tolerance or hit a singular system.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A mathematical precondition of an experiment is violated (e.g. a periodic observable).
class PreconditionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace towerlimits
