#pragma once

#include <stdexcept>
#include <string>

namespace gnh {

/// Spectral precondition failed: operator not symmetric or not nonnegative,
/// function undefined on the spectrum, complement refused.
class SpectralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A state violates the constraint set it was declared to live on.
class ConstraintViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data has the wrong shape, size, or format.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file could not be opened, read or written.
class IoError : public ShapeError {
 public:
  using ShapeError::ShapeError;
};

}  // namespace gnh
