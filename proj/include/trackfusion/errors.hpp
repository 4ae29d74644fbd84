#pragma once

#include <stdexcept>
#include <string>

namespace trackfusion {

/// Base of every error raised by the library. `is_numeric()` separates
/// numerical failures (singular systems, degenerate designs) from invalid
/// input, which the CLI maps to distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual bool is_numeric() const noexcept { return false; }
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class IngestionError : public Error {
 public:
  using Error::Error;
};

class TimelineError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
  bool is_numeric() const noexcept override { return true; }
};

class DegenerateDesign : public NumericError {
 public:
  using NumericError::NumericError;
};

class SingularInnovation : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace trackfusion
