#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lrvb {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A primitive was evaluated outside its domain (log of a non-positive value, ...).
class DomainError : public Error {
 public:
  explicit DomainError(std::string primitive)
      : Error("domain error in " + primitive), primitive_(std::move(primitive)) {}
  const std::string& primitive() const noexcept { return primitive_; }

 private:
  std::string primitive_;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Malformed user input. `line()` is 0 when the error is not tied to a file line.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class OptimizationError : public Error {
 public:
  using Error::Error;
};

class SingularityError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class DiagnosticsError : public Error {
 public:
  using Error::Error;
};

}  // namespace lrvb
