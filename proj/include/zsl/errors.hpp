#pragma once

#include <stdexcept>
#include <string>

namespace zsl {

// Error hierarchy. Each category maps to one CLI exit code (see tools/).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Caller broke a precondition (bad label, non-scalar loss, missing gradient).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Input data or configuration failed validation.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf or an undefined numeric quantity (zero-norm vector).
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace zsl
