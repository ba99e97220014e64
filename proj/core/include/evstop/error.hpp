#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace evstop {

// Base for every error raised by the library. The CLI maps the concrete
// subclasses onto exit codes (data 2, configuration 3, invariant 4).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input records are malformed or numerically unusable.
class DataError : public Error {
public:
    using Error::Error;
};

// A parse failure tied to a line of the input stream (1-based).
class ParseError : public DataError {
public:
    ParseError(std::size_t line, const std::string& what)
        : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Series with zero variance or too few points for an estimator.
class DegenerateInputError : public DataError {
public:
    using DataError::DataError;
};

// Parameters or mode choices that cannot be honoured.
class ConfigError : public Error {
public:
    using Error::Error;
};

// An API contract was broken by the caller (e.g. stepping a finished E-process).
class UsageError : public Error {
public:
    using Error::Error;
};

// An internal invariant did not hold; indicates a bug, not bad input.
class InvariantError : public Error {
public:
    using Error::Error;
};

} // namespace evstop
