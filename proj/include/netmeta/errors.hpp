#pragma once

#include <stdexcept>
#include <string>

namespace netmeta {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad input data or schema: malformed JSON shapes, unknown treatments,
// non-PD within-study covariance, inconsistent dimensions.
struct ValidationError : Error {
  using Error::Error;
};

// The requested model cannot be estimated from this network: singular
// normal equations, singular estimating equations, insufficient replication.
struct IdentifiabilityError : Error {
  using Error::Error;
};

// A matrix that must be inverted is too ill-conditioned to trust.
struct NumericalError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace netmeta
