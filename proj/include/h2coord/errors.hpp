#pragma once

#include <stdexcept>
#include <string>

namespace h2coord {

/// Raised when a numerical routine cannot deliver a certified result
/// (non-Hurwitz matrix, missing stabilizing solution, residual too large).
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a problem violates one of the structural assumptions the
/// synthesis relies on.
class AssumptionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace h2coord
