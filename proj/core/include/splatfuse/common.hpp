#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace splatfuse {

// Configuration problems (bad values, unknown keys, missing files named by
// the config). CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent input data (images, PLY, CSV, JSON payloads).
// CLI maps this to exit code 3.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Optimization failed to make progress. CLI maps this to exit code 4.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace splatfuse
