#pragma once

#include <stdexcept>
#include <string>

namespace gpassm {

/// Raised for malformed inputs: non-finite coordinates, non-positive
/// hyperparameters, empty regions and the like.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a factorization fails or a filter step produces non-finite
/// numbers. `step` is -1 when the failure is not tied to a filter step.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, long step = -1)
      : std::runtime_error(step >= 0 ? what + " (step " + std::to_string(step) + ")" : what),
        step_(step) {}

  [[nodiscard]] long step() const noexcept { return step_; }

 private:
  long step_;
};

/// Configuration file problems. The message names the offending key or path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gpassm
