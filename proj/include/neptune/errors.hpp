#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace neptune {

/// Shape or index precondition broken by the caller.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Raised when a training step produces a non-finite loss or gradient.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

[[noreturn]] void throw_dim_mismatch(const char* where, std::size_t expected,
                                     std::size_t actual);

inline void require_dim(const char* where, std::size_t expected, std::size_t actual) {
  if (expected != actual) throw_dim_mismatch(where, expected, actual);
}

}  // namespace neptune
