#pragma once

#include <stdexcept>
#include <string>

namespace scnet {

/// Invalid configuration, mismatched sizes, or other caller errors.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerical failures: training divergence, aliasing guard, undefined
/// relative quantities.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

inline void require_same_size(std::size_t a, std::size_t b, const char* ctx) {
  if (a != b)
    throw ConfigError(std::string(ctx) + ": length mismatch (" + std::to_string(a) +
                      " vs " + std::to_string(b) + ")");
}

}  // namespace detail
}  // namespace scnet
