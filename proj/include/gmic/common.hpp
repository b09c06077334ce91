#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gmic {

using i64 = std::int64_t;
using u64 = std::uint64_t;

// Thrown when tensor shapes or op preconditions are violated.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Bad or inconsistent run configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Missing/corrupt dataset files, manifest problems (CLI exit code 3).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// NaN/Inf in a computation, failed gradient check (CLI exit code 4).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

static_assert(sizeof(float) == 4 && sizeof(double) == 8);

}  // namespace gmic
