#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace facekit {

enum class ErrorKind {
  parse,        // malformed or unreadable input
  shape,        // dimension / index mismatch
  convergence,  // iterative solve did not reach tolerance
  invalid,      // value outside its documented domain
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse: return "parse";
    case ErrorKind::shape: return "shape";
    case ErrorKind::convergence: return "convergence";
    case ErrorKind::invalid: return "invalid";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error shape_error(const std::string& what) { return {ErrorKind::shape, what}; }
inline Error parse_error(const std::string& what) { return {ErrorKind::parse, what}; }
inline Error invalid_error(const std::string& what) { return {ErrorKind::invalid, what}; }

inline void expect_size(std::size_t expected, std::size_t actual, std::string_view what) {
  if (expected != actual) {
    throw shape_error(std::string(what) + ": expected " + std::to_string(expected) +
                      ", got " + std::to_string(actual));
  }
}

}  // namespace facekit
