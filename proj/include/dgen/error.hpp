#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dgen {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input data: malformed files, empty node sets, unusable label sets.
class DataError : public Error {
public:
    using Error::Error;
};

class ParseError : public DataError {
public:
    ParseError(const std::string& file, std::size_t line, const std::string& what)
        : DataError(file + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class EmptyInputError : public DataError {
public:
    using DataError::DataError;
};

/// Raised when noise injection has no non-edge left to add.
class CannotAddError : public DataError {
public:
    using DataError::DataError;
};

class DegenerateLabelsError : public DataError {
public:
    using DataError::DataError;
};

/// Violated precondition of an operation (wrong shapes, bad ratios, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

class DimensionError : public ContractError {
public:
    using ContractError::ContractError;
};

/// Numerical domain or divergence failure.
class NumericalError : public Error {
public:
    using Error::Error;
};

class DomainError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw ContractError(what);
}

}  // namespace dgen
