#pragma once

#include <stdexcept>
#include <string>

namespace privbarrier {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input document. Line and column are 1-based; 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0, std::size_t column = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ", column " +
                         std::to_string(column) + ")"
                   : what),
        line_(line),
        column_(column) {}
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// Well-formed input that violates a model or spec invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Caller broke an operation precondition (wrong model class, bad degree, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class UnknownActionError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

/// Bayesian update with an observation that has (numerically) zero probability.
class ZeroProbabilityObservation : public Error {
 public:
  using Error::Error;
};

class UnsupportedEncoding : public Error {
 public:
  using Error::Error;
};

class BudgetExceeded : public Error {
 public:
  using Error::Error;
};

class DegreeOverflow : public Error {
 public:
  using Error::Error;
};

class NumericalFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace privbarrier
