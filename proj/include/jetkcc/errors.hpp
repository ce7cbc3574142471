#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace jetkcc {

/// Base of all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed expression text. `position()` is a byte offset into the input.
class ParseError : public Error {
 public:
  enum class Reason { syntax, index_out_of_range, unknown_identifier };

  ParseError(Reason reason, std::size_t position, const std::string& message)
      : Error(message + " at offset " + std::to_string(position)),
        reason_(reason),
        position_(position) {}

  Reason reason() const { return reason_; }
  std::size_t position() const { return position_; }

 private:
  Reason reason_;
  std::size_t position_;
};

/// Unbound variable or a domain error hit during evaluation.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Singular metric or Jacobian at an evaluation point.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Inputs that violate an operation's contract (dimensions, kinds, missing
/// data, failed hypotheses).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

}  // namespace jetkcc
