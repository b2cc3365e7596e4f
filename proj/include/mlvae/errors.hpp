#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mlvae {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite or otherwise malformed distribution parameters.
class InvalidDistribution : public Error {
 public:
  using Error::Error;
};

/// Tensor/vector dimensions disagree with the configured shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Bad run configuration (unknown key, out-of-range value, impossible combination).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An operation was attempted from a state that forbids it (e.g. negative lambda).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary input; carries the byte offset where parsing stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Training produced a non-finite loss. `checkpoint` names the diagnostic dump, if any.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, std::string checkpoint)
      : Error(what), checkpoint_(std::move(checkpoint)) {}

  const std::string& checkpoint() const noexcept { return checkpoint_; }

 private:
  std::string checkpoint_;
};

}  // namespace mlvae
