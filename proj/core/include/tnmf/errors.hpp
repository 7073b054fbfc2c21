#pragma once

#include <stdexcept>
#include <string>

namespace tnmf {

/// Invalid distribution, chain or prior parameters.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Requested quantity is undefined for these parameters
/// (e.g. a marginal variance whose closed form does not exist).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Invalid run configuration (bad prior/likelihood combination,
/// infeasible split request, malformed grids, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input data could not be loaded or violates data invariants.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure: degenerate denominators, non-finite objective,
/// infinite divergence, collapsed components.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Root bracketing failed (no sign change on the given interval).
class BracketingError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace tnmf
