#pragma once

#include <stdexcept>
#include <string>

namespace xannot {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation (e.g. E <= 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Mismatched or unsupported tensor / image dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed caller input (bad request fields, conflicting assignments).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A material footprint does not fit inside the scene canvas.
class PlacementError : public Error {
 public:
  using Error::Error;
};

/// A mask has no foreground where at least one pixel was required.
class DegenerateMask : public Error {
 public:
  using Error::Error;
};

class CodecError : public Error {
 public:
  using Error::Error;
};

class TaxonomyError : public Error {
 public:
  using Error::Error;
};

/// Illegal annotation state transition.
class StateError : public Error {
 public:
  using Error::Error;
};

class RoundLimitError : public StateError {
 public:
  using StateError::StateError;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Failure talking to a segmentation oracle.
class BackendError : public Error {
 public:
  enum class Kind { timeout, status, malformed, empty };

  BackendError(Kind kind, const std::string& what, int status = 0)
      : Error(what), kind_(kind), status_(status) {}

  Kind kind() const noexcept { return kind_; }
  int status() const noexcept { return status_; }

 private:
  Kind kind_;
  int status_;
};

const char* to_string(BackendError::Kind kind) noexcept;

}  // namespace xannot
