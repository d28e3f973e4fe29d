#pragma once

#include <stdexcept>
#include <string>

namespace fishswim {

// Invalid configuration: bad ranges, unknown keys, mismatched dimensions.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (CSV references, checkpoints).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The simulation produced NaN/Inf, a non-positive density, or a loss blew up.
class NumericFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A Lagrangian marker left the fluid domain (the fish hit the pool wall).
class OutOfDomain : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fishswim
