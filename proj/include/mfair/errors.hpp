#pragma once

#include <stdexcept>
#include <string>

namespace mfair {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration or input data. CLI exit code 2.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Anything that went wrong while computing. CLI exit code 3.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& msg, double grad_norm)
      : NumericalError(msg), last_gradient_norm(grad_norm) {}
  double last_gradient_norm;
};

class SingularDesign : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DegenerateDenominator : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NoFairRule : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NotFitted : public Error {
 public:
  using Error::Error;
};

class EstimationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class TooFewExceedances : public EstimationError {
 public:
  using EstimationError::EstimationError;
};

}  // namespace mfair
