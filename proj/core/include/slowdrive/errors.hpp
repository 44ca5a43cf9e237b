#pragma once

#include <stdexcept>
#include <string>

namespace slowdrive {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments or operators that violate a type invariant.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class InvalidOperator : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class RangeError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class DomainMismatch : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class ValidationError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

// Failures of a numerical procedure on otherwise valid input.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class ConvergenceFailure : public NumericalError {
 public:
  ConvergenceFailure(const std::string& what, double last_defect)
      : NumericalError(what), last_defect_(last_defect) {}
  double last_defect() const noexcept { return last_defect_; }

 private:
  double last_defect_;
};

class TrackingLoss : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class MultiplicityError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class BoundaryContamination : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ResolutionError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class PropositionInapplicable : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace slowdrive
