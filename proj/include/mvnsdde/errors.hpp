#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mvnsdde {

/// Inputs have incompatible dimensions or sizes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Problem exceeds a fixed algorithmic capacity; the caller should subsample.
class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Time grid bookkeeping does not line up (non-integer step counts, bad coarsening factors).
class GridError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed run configuration or experiment request.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Model/scheme parameters violate the standing structural assumptions.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Log-log fit requested on a table it cannot fit.
class DegenerateFitError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace mvnsdde
