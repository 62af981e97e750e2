#pragma once
// Exception types shared by every groundkit module.
//
// Data errors (bad input files, invariant violations) derive from DataError so
// the CLI can map them to a dedicated exit status.

#include <stdexcept>
#include <string>

namespace groundkit {

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input did not parse as the documented schema.
class ParseError : public DataError {
public:
    ParseError(std::string where, const std::string& what)
        : DataError(where + ": " + what), where_(std::move(where)) {}
    const std::string& where() const noexcept { return where_; }

private:
    std::string where_;
};

/// Input parsed but violates a domain invariant.
class ValidationError : public DataError {
public:
    ValidationError(std::string where, const std::string& what)
        : DataError(where + ": " + what), where_(std::move(where)) {}
    const std::string& where() const noexcept { return where_; }

private:
    std::string where_;
};

/// A request that cannot be satisfied with the given data (quota too large,
/// purity floor unreachable, ...).
class InfeasibleError : public DataError {
public:
    using DataError::DataError;
};

} // namespace groundkit
