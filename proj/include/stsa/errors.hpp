#pragma once

#include <stdexcept>
#include <string>

namespace stsa {

// Raised when a numeric routine produces non-finite values, hits an
// ill-conditioned system, or an iterate diverges.
class numerical_error : public std::runtime_error {
 public:
  explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

// Raised for inconsistent run/problem configuration (mismatched grids,
// bad dimensions, unknown keys).
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a model violates a structural requirement (non-ergodic chain,
// singular TD operator).
class model_error : public std::runtime_error {
 public:
  explicit model_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace stsa
