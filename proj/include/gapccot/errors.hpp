#pragma once

#include <stdexcept>
#include <string>

namespace gapccot {

/// Shape or axis disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid layer or network configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Caller misuse: bad arguments that are not shape problems.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A plug-in (e.g. a denoiser) broke its output contract.
class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training diverged. Carries the epoch where it happened.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::size_t epoch)
      : std::runtime_error(what), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

/// Malformed or unreadable file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gapccot
