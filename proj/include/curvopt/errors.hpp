#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace curvopt {

// Invalid configuration or input: bad dimensions, out-of-range hyperparameters,
// unsupported file formats, caps exceeded. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical breakdown at runtime: non-finite values, failed factorizations,
// line-search collapse, eigensolver non-convergence. Maps to CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input file. Carries the byte offset where parsing failed.
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& what, std::size_t byte_offset)
      : std::runtime_error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}

  std::size_t byte_offset() const noexcept { return byte_offset_; }

private:
  std::size_t byte_offset_;
};

}  // namespace curvopt
