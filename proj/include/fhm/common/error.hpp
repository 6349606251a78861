#pragma once

#include <stdexcept>
#include <string>

namespace fhm {

/// Input violates a documented contract (bad shape, bad config, bad argument).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file does not follow its declared binary layout (magic, version, header).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file's payload is shorter or longer than its header declares.
class LengthMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Tensor or grid shapes disagree.
class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Non-finite values, divergence, or solver non-convergence.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fhm
