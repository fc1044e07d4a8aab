#pragma once

#include <stdexcept>
#include <string>

namespace flsim {

// Invalid configuration detected before any computation starts.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A caller handed an operation inputs that violate its contract.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed bytes in an external file (IDX corpus, checkpoint, CSV).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t byte_offset)
      : std::runtime_error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
  std::size_t offset;
};

// Non-finite value produced or encountered during numerical work.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::size_t bad_index)
      : std::runtime_error(what + " (index " + std::to_string(bad_index) + ")"),
        index(bad_index) {}
  std::size_t index;
};

// Aggregation asked to combine an unusable update set.
class AggregationError : public std::runtime_error {
 public:
  explicit AggregationError(const std::string& what) : std::runtime_error(what) {}
};

// A metric was requested outside its domain of definition.
class MetricError : public std::runtime_error {
 public:
  explicit MetricError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace flsim
