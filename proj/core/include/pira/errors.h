#pragma once

#include <stdexcept>
#include <string>

namespace pira {

// Base class for all errors thrown by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A config or input value violates a documented invariant. `field` names
// the offending field so the CLI can report it.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& msg)
      : Error("field '" + field + "': " + msg), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// Filesystem-level failure: missing file, short read, unwritable path.
class IoError : public Error {
 public:
  using Error::Error;
};

// A file opened fine but its contents do not match the expected format.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& msg, long line = -1)
      : Error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
        line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

// Tensor shapes incompatible with the requested primitive.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A primitive produced a NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Checkpoint config does not match what the caller expects.
class ConfigMismatchError : public Error {
 public:
  using Error::Error;
};

// An API contract was violated (e.g. backward from a non-scalar node).
class ContractError : public Error {
 public:
  using Error::Error;
};

// A function required to be deterministic returned differing values.
class DeterminismError : public Error {
 public:
  using Error::Error;
};

}  // namespace pira
