#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace sirinv {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Grid sizes or shapes that an operation cannot work with.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid parameters or configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. `offset` is the byte position where parsing failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Measured data that violates an assumption of the inverse problem.
class DataValidityError : public Error {
 public:
  using Error::Error;
};

/// Numerical breakdown: instability, NaN, divergence.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver ran out of iterations.
class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, std::vector<double> history)
      : NumericalError(what), history_(std::move(history)) {}
  const std::vector<double>& residual_history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

/// Parameter schedule whose preconditions do not hold for the given geometry.
class ScheduleError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Bundles from different runs were mixed, or a recorded hash does not match.
class ProvenanceError : public Error {
 public:
  using Error::Error;
};

}  // namespace sirinv
