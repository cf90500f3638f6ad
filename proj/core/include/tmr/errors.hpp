#pragma once

#include <stdexcept>
#include <string>

namespace tmr {

/// Shape or dimension mismatch between tensors. Message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

/// Invalid configuration (bad flag combination, out-of-range value).
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

enum class DatasetErrorKind {
  VersionMismatch,
  Truncated,
  OffsetOutOfBounds,
  Io,
};

/// Dataset file problem; `kind()` distinguishes the failure class.
class DatasetError : public std::runtime_error {
 public:
  DatasetError(DatasetErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  DatasetErrorKind kind() const { return kind_; }

 private:
  DatasetErrorKind kind_;
};

/// Numeric failure: NaN loss, tolerance breach. CLI maps this to exit code 2.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tmr
