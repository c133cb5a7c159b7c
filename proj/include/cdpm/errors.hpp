#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cdpm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the domain of a formula (t outside [0, T], singular density).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Invalid or unusable parameter set (non-positive rates, overflowing priors, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// The score field lacks an optional capability such as an exact divergence.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

// Caller misuse: mismatched sample counts, wrong dimension, size caps.
class UsageError : public Error {
 public:
  using Error::Error;
};

class IntegrationDiverged : public Error {
 public:
  IntegrationDiverged(std::size_t step, const std::string& what)
      : Error("integration diverged at step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace cdpm
