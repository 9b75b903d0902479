#pragma once

#include <stdexcept>
#include <string>

namespace lightcap {

/// Bad input or violated precondition. The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class IndexError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

/// Raised by the gradient checker when two evaluations of the objective differ.
class DeterminismError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

/// Filesystem or stream failure. The CLI maps this to exit code 2.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed binary checkpoint.
class CheckpointError : public IoError {
public:
  enum class Kind { bad_magic, bad_version, truncated, config_mismatch, shape_mismatch };

  CheckpointError(Kind kind, const std::string& what) : IoError(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

private:
  Kind kind_;
};

} // namespace lightcap
