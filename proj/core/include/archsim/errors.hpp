#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace archsim {

/// Base class for every error raised by the toolkit. `kind()` is a stable
/// machine-readable tag used by the CLI error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message) : Error("validation", message) {}
};

class ShapeError : public Error {
 public:
  ShapeError(std::ptrdiff_t layer, const std::string& message)
      : Error("shape", layer >= 0 ? "layer " + std::to_string(layer) + ": " + message : message),
        layer_(layer) {}

  /// Index of the offending layer, or -1 when the error is not layer specific.
  std::ptrdiff_t layer() const noexcept { return layer_; }

 private:
  std::ptrdiff_t layer_;
};

class NonFiniteError : public Error {
 public:
  NonFiniteError(std::ptrdiff_t layer, const std::string& message)
      : Error("non-finite", layer >= 0 ? "layer " + std::to_string(layer) + ": " + message : message),
        layer_(layer) {}

  std::ptrdiff_t layer() const noexcept { return layer_; }

 private:
  std::ptrdiff_t layer_;
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& message) : Error("format", message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("io", message) {}
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(int epoch, std::size_t step, const std::string& message)
      : Error("diverged", "epoch " + std::to_string(epoch) + " step " + std::to_string(step) + ": " + message),
        epoch_(epoch),
        step_(step) {}

  int epoch() const noexcept { return epoch_; }
  std::size_t step() const noexcept { return step_; }

 private:
  int epoch_;
  std::size_t step_;
};

/// Raised when two models share no jointly-correct evaluation input.
class IncomparablePair : public Error {
 public:
  IncomparablePair(const std::string& a, const std::string& b)
      : Error("incomparable", "models '" + a + "' and '" + b + "' have no jointly-correct inputs") {}
};

}  // namespace archsim
