#pragma once

#include <stdexcept>
#include <string>

namespace edfield {

/// Bad input: the message names the offending field.
class ValidationError : public std::invalid_argument {
public:
    ValidationError(const std::string& field, const std::string& what)
        : std::invalid_argument(field + ": " + what), field_(field) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// A computation left its domain of validity (singular drift, node formation, ...).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SingularDriftError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class NodeFormationError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Problem too large for a dense path.
class SizeLimitError : public std::length_error {
public:
    using std::length_error::length_error;
};

inline constexpr std::size_t kDenseLimit = 4096;

}  // namespace edfield
