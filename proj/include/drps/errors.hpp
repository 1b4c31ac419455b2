#pragma once

#include <stdexcept>
#include <string>

namespace drps {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes of the arguments do not agree.
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// A precondition on a scalar or index argument was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A covariance (input or fitted) is not positive definite.
class DegenerateDistribution : public Error {
 public:
  using Error::Error;
};

/// Back-projection or an interpolated covariance lost positive definiteness.
class IndefiniteCovariance : public DegenerateDistribution {
 public:
  using DegenerateDistribution::DegenerateDistribution;
};

/// The KL/entropy constrained fit could not find feasible multipliers.
class ConstrainedUpdateFailed : public Error {
 public:
  using Error::Error;
};

/// A correlation measure is undefined for the given data (zero variance).
class UndefinedCorrelation : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment or algorithm configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace drps
