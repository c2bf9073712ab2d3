#pragma once

#include <stdexcept>
#include <string>

namespace vecspin {

// Error categories map one-to-one onto CLI exit codes.

/// Malformed input text (exit code 2).
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input violates a domain invariant (exit code 3).
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Work budget exceeded or constraint set infeasible (exit code 4).
class BudgetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical postcondition failed (exit code 5).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
    if (!ok) throw ValidationError(what);
}

} // namespace vecspin
