#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace giwr {

// Violated precondition of a library call (wrong arity, non-scalar loss, ...).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

struct ShapeError : ContractError {
    using ContractError::ContractError;
};

// Input outside the mathematical domain of an op (log of a non-positive value).
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

// Inconsistent run configuration, detected before any training step.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed binary file; `offset` is the byte position where decoding failed.
struct ParseError : std::runtime_error {
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
          offset(offset) {}
    std::size_t offset;
};

// A loss went non-finite during training.
struct NumericalAbort : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace giwr
