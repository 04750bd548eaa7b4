#pragma once

#include <stdexcept>
#include <string>

namespace stars {

// Operands violate a documented precondition (shape mismatch, bad split, ...).
struct ContractError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A configuration or argument value is outside its valid range.
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Operation not valid in the object's current state (consumed tape, wrong variant).
struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};

// Malformed input file; message carries location context.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Data inconsistent with a skeleton or schema it must match.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Missing or contradictory run configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training cannot continue (non-finite loss component).
struct TrainingAbort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The finite-difference oracle failed to evaluate the target function.
struct OracleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace stars
