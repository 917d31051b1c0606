#pragma once

#include <stdexcept>
#include <string>

namespace wsnd {

/// Invalid user input: malformed configuration, violated preconditions,
/// disconnected communication graph. Maps to CLI exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical routine failed to deliver its accuracy contract.
/// Maps to CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative routine hit its iteration cap. Carries the last residual.
class NonConvergenceError : public NumericalError {
 public:
  NonConvergenceError(const std::string& what, double residual)
      : NumericalError(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class DisconnectedGraphError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

}  // namespace wsnd
