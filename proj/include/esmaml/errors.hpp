#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace esmaml {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector or matrix dimensions disagree, or a dimension is zero.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input is degenerate for the operation (zero vector, empty sample).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// A scalar parameter is outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// The operation needs something the object does not provide
/// (a gradient, true objective values).
class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// Objective evaluation produced a non-finite value or state.
class EvaluationError : public Error {
 public:
  EvaluationError(const std::string& what, std::size_t step = npos)
      : Error(what), step_(step) {}

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  /// Step index at which the failure occurred, or npos.
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// An evaluation cap on a NoisyObjective would be exceeded.
class BudgetExhaustedError : public Error {
 public:
  using Error::Error;
};

/// Configuration is invalid or internally inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace esmaml
