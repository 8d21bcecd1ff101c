#pragma once

// Deterministic baselines: truncated-SVD inversion on top of a randomized
// double-pass eigendecomposition of H*H (operator actions only, H never
// materialized), and frequency-marched Landweber ("recursive linearization")
// for the multi-frequency Helmholtz source problem.

#include <functional>
#include <vector>

#include "vinet/forward.hpp"
#include "vinet/grid.hpp"
#include "vinet/rng.hpp"

namespace vinet::classical {

struct EigPairs {
  std::vector<double> values;               // descending, clipped at >= 0 by PSD-ness
  std::vector<grid::GridFunction> vectors;  // orthonormal w.r.t. inner_l2
  bool rank_deficient = false;              // fewer usable pairs than requested
};

using OpAction = std::function<grid::GridFunction(const grid::GridFunction&)>;

// Double pass: sketch Y_i = A w_i, orthonormalize, project T = Q^T A Q,
// eigendecompose T. A must be self-adjoint PSD w.r.t. inner_l2.
EigPairs randomized_eig(const OpAction& action, const grid::Grid& g, int rank,
                        int oversample, Rng& rng);

// Convenience: spectral filter q_{lambda_m}(H*H) H* d with q = 1/lambda above
// the cut, 0 below.
grid::GridFunction tsvd_invert(const std::vector<double>& d, const EigPairs& eig,
                               const forward::LinearForward& H, double lambda_m);

struct RlmConfig {
  std::vector<double> kappas;  // ascending marching schedule
  int inner = 5;               // Landweber iterations per frequency
  double step_fraction = 0.9;  // tau = step_fraction / lambda_max(Hk* Hk)
  int power_iters = 30;
  double step_override = 0.0;  // > 0 fixes tau directly (stability tests)
  std::uint64_t seed = 1234;   // power-iteration probe seed
};

struct RlmResult {
  grid::GridFunction estimate;
  std::vector<double> residuals;  // ||d_k - H_k u|| after each frequency stage
  std::vector<double> steps;      // tau used per frequency
  bool diverged = false;
};

// d_multifreq follows HelmholtzForward's layout restricted to cfg.kappas,
// which must be a subsequence of H.kappas().
RlmResult rlm_invert(const std::vector<double>& d_multifreq,
                     const forward::HelmholtzForward& H, const RlmConfig& cfg);

} // namespace vinet::classical
