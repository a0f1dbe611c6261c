#pragma once

#include <stdexcept>
#include <string>

namespace effloc {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor shapes incompatible with the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller violated an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid model or training configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Corrupt or inconsistent dataset content.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Malformed serialized file (checkpoint, image, manifest).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Scene/pose combination that cannot be rendered.
class RenderError : public Error {
 public:
  using Error::Error;
};

/// Numeric failure during training (non-finite values).
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Bad command-line usage.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace effloc
