#pragma once

#include <stdexcept>
#include <string>

namespace bayeslast {

// Raised when a symmetric matrix has a non-positive pivot during Cholesky.
class NotPositiveDefinite : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by the dense LU solver and by the affine-cost KKT oracle.
class SingularSystem : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularKkt : public SingularSystem {
 public:
  using SingularSystem::SingularSystem;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bayeslast
