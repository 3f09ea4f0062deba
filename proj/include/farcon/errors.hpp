#pragma once

#include <stdexcept>
#include <string>

namespace farcon {

/// Raised when tensor or layer shapes do not line up.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a primitive produces NaN or Inf. Carries the primitive name and
/// the loss component (scope) that was being evaluated.
class NumericError : public std::runtime_error {
 public:
  NumericError(std::string primitive, std::string scope)
      : std::runtime_error("non-finite value produced by '" + primitive + "'" +
                           (scope.empty() ? std::string() : " in component '" + scope + "'")),
        primitive_(std::move(primitive)),
        scope_(std::move(scope)) {}

  const std::string& primitive() const noexcept { return primitive_; }
  const std::string& scope() const noexcept { return scope_; }

 private:
  std::string primitive_;
  std::string scope_;
};

/// Malformed input files (CSV cells, schemas, checkpoints).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration values or unknown keys.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace farcon
