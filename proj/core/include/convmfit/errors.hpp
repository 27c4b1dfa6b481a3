#pragma once

#include <stdexcept>
#include <string>

namespace convmfit {

// Shape or dimension disagreement between tensors.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// NaN/Inf values where finite values are required (CLI exit code 4).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Bad configuration: unknown keys, out-of-range values (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A pipeline stage is missing a prerequisite artifact (CLI exit code 3).
class DependencyError : public std::runtime_error {
 public:
  explicit DependencyError(const std::string& what) : std::runtime_error(what) {}
};

// Corrupt or incompatible on-disk artifact (magic, version, hash mismatch).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace convmfit
