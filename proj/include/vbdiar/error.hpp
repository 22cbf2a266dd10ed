#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vbdiar {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text. Carries the 1-based line number when known (0 otherwise).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Well-formed input that cannot be processed (empty reference, dimension mismatch, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid invocation or parameter combination.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace vbdiar
