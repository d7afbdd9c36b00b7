#pragma once

#include <stdexcept>
#include <string>

namespace biscotti {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Arguments violate a documented precondition (dimension mismatch, bad
/// parameter range, empty input).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed serialized input. Carries the byte offset where parsing failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Fixed-point encoding would wrap around the field modulus.
class OverflowError : public Error {
 public:
  using Error::Error;
};

/// Internal consistency failure (division remainder, recovery mismatch).
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

}  // namespace biscotti
