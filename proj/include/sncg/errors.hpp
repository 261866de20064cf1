#pragma once

#include <stdexcept>
#include <string>

namespace sncg {

/// Input violates a documented contract (shapes, masses, file schema).
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// Configuration cannot describe a runnable model (e.g. undiscounted infinite horizon).
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// A numeric quantity became NaN/Inf.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sncg
