#pragma once

#include <stdexcept>
#include <string>

namespace dcm {

// Bad input data or parameters (maps to CLI exit code 1).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Solver non-convergence, singular systems, NaN losses (exit code 2).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File access and format problems (exit code 3).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dcm
