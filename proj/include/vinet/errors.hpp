#pragma once

#include <stdexcept>
#include <string>

namespace vinet {

// Linear-solver failure (CG non-convergence, singular factorization, ...).
// Carries the final residual when one is meaningful.
class SolverError : public std::runtime_error {
 public:
  explicit SolverError(const std::string& what, double residual = -1.0)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

// Invalid user-facing configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

} // namespace vinet
