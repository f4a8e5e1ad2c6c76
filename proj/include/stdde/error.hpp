#pragma once

#include <stdexcept>
#include <string>

namespace stdde {

/// Malformed arguments or inputs that violate a precondition.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A query outside the domain a continuous object is defined on.
class RangeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File content that cannot be parsed; carries the offending line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Non-finite state, loss or gradient encountered during a numerical run.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace stdde
