#pragma once

#include <stdexcept>

namespace cyclemorph {

// All library errors are exceptions rooted here. The CLI maps subtrees onto
// process exit codes: usage problems -> 2, unreadable or malformed input
// files -> 3, numerical failures -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A precondition on values was violated (non-finite input, parameter out of
// its admissible range, mismatched sizes).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Geometric degeneracy: ray parallel to the surface plane, zero-length
// normal, frame hint collinear with the normal, and similar.
class GeometryError : public Error {
 public:
  using Error::Error;
};

// A computation produced a non-finite intermediate or diverged. The message
// carries enough context (node, block, epoch) to locate the failure.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// File reading/writing and serialization failures.
class IoError : public Error {
 public:
  using Error::Error;
};

// File parsed as JSON/CSV but does not match the expected schema.
class MalformedFileError : public IoError {
 public:
  using IoError::IoError;
};

// Checkpoint carries a format_version this build does not understand.
class VersionMismatchError : public IoError {
 public:
  using IoError::IoError;
};

// Checkpoint parameter vector length disagrees with its declared architecture.
class CountMismatchError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace cyclemorph
