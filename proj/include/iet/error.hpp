#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace iet {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or extent mismatch between tensors.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value (window even, channels not divisible by heads, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input file. Carries the byte offset where parsing gave up.
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, size_t byte_offset)
      : Error(msg + " (byte offset " + std::to_string(byte_offset) + ")"),
        offset_(byte_offset) {}
  size_t byte_offset() const { return offset_; }

 private:
  size_t offset_;
};

// A candidate index escaped [0, N) or violated a set invariant.
class CandidateError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf surfaced from a numeric operation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// API misuse (backward without saved forward, missing handle, ...).
class UsageError : public Error {
 public:
  using Error::Error;
};

// Filesystem-level failure (open/read/write).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace iet
