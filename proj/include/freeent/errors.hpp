#pragma once

#include <stdexcept>
#include <string>

namespace freeent {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Violated precondition or malformed input (bad sizes, bad radii, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Experiment configuration could not be parsed or validated.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The target state is not approximable at the requested (N, K, eps);
/// this is the finite-N face of an entropy equal to minus infinity.
class InfeasibleTarget : public Error {
 public:
  using Error::Error;
};

/// A Monte Carlo estimator could not produce a trustworthy value
/// (stuck chain, underflowing inner averages, zero hits, ...).
class EstimatorFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace freeent
