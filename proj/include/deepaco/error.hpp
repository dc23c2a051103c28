#pragma once

#include <stdexcept>
#include <string>

namespace deepaco {

// Operand shapes do not conform to an op's rule.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite value, divergence, or an undefined numeric quantity.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Solution or state violates a problem constraint.
class FeasibilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or incompatible files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace deepaco
