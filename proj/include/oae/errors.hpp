#pragma once

#include <stdexcept>
#include <string>

namespace oae {

// Bad arguments, shapes, or configuration supplied by the caller.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ShapeError : public UsageError {
 public:
  using UsageError::UsageError;
};

// Malformed files, short reads, checksum failures, I/O errors.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf encountered in values or gradients.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace oae
