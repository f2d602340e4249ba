#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace flam {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Incompatible matrix/grid dimensions.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid parameter value (even kernel size, non-positive temperature, ...).
struct ConfigError : Error {
  using Error::Error;
};

// Filesystem-level failure (missing file, unwritable path).
struct IoError : Error {
  using Error::Error;
};

// Malformed file contents; offset is the byte position of the problem.
struct FormatError : Error {
  std::size_t offset;
  FormatError(const std::string& msg, std::size_t off)
      : Error(msg + " (offset " + std::to_string(off) + ")"), offset(off) {}
};

// Point configuration that admits no unique epipolar solution.
struct DegenerateError : Error {
  using Error::Error;
};

// Fewer samples than the estimator's minimal set.
struct InsufficientDataError : Error {
  using Error::Error;
};

// No essential-matrix decomposition candidate wins cheirality outright.
struct AmbiguousPoseError : Error {
  using Error::Error;
};

// Operation undefined on the given input (e.g. statistics of an empty list).
struct UndefinedInputError : Error {
  using Error::Error;
};

}  // namespace flam
