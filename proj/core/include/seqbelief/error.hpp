#pragma once

#include <stdexcept>
#include <string>

namespace seqbelief {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller passed arguments that violate an operation's preconditions.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A dataset record failed schema or invariant validation.
class ValidationError : public InvalidInput {
 public:
  ValidationError(std::size_t line, const std::string& message)
      : InvalidInput("line " + std::to_string(line) + ": " + message), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Filesystem or network failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A metric is mathematically undefined for the given inputs (e.g. AUC with one class).
class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

/// A computation produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace seqbelief
