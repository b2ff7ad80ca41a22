#pragma once

#include <stdexcept>
#include <string>

namespace screenbo {

// Bad arguments or violated preconditions (dimension mismatches, ids in the
// wrong test state, invalid sample counts).
class InputError : public std::invalid_argument {
 public:
  explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

// Linear-algebra failure that survived the jitter ladder.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed experiment or schema configuration.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Schema refers to columns the file does not have, or similar.
class SchemaError : public ConfigError {
 public:
  explicit SchemaError(const std::string& what) : ConfigError(what) {}
};

// File contents violate the schema (non-numeric cell, log of a non-positive
// value, ...). Carries enough context to locate the offending row.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace screenbo
