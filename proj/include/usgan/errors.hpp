#pragma once

#include <stdexcept>
#include <string>

namespace usgan {

/// Root of every error the toolkit throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid ModelConfig / TrainConfig / run-config file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor shape does not match the configuration.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Value-level invariant violated (non one-hot label, pixel out of range, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or gradient.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// File could not be read, decoded or written. The message carries the path.
class IoError : public Error {
 public:
  IoError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Serialized container is malformed or does not match the expected layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Training diverged; a crash checkpoint was written to `checkpoint_path()`.
class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, std::string checkpoint_path)
      : NumericalError(what), checkpoint_path_(std::move(checkpoint_path)) {}
  const std::string& checkpoint_path() const noexcept { return checkpoint_path_; }

 private:
  std::string checkpoint_path_;
};

/// Verification backend unreachable or timed out. Safe to retry.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Verification backend answered with something that is not the contract.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace usgan
