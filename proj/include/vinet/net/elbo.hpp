#pragma once

// The infinite-dimensional evidence lower bound, discretized on the
// inversion grid, as a differentiable loss:
//   L = I1 + I2 + I3,  loss = -L, with
//   I1 = log dmu0/dnu at the reparameterized sample
//      = [logdet M0 - logdet M_p] + 1/2 ||W||^2 - 1/2 ||M0 (u~ - u0)||^2,
//        u~ = u_p + M_p^{-1} W,  M_p = diag(a) + delta L,  M0 = eps0^{-1} + delta L
//   I2 = -KL(IG(alpha, beta) || IG(alpha0, beta0)) summed over sensors
//   I3 = -1/2 sum_i (log beta_i - psi(alpha_i))
//        - 1/2 (d - H u~)^T diag(alpha/beta) (d - H u~)
// Log-determinants and solves share one sparse factorization per evaluation;
// the d(logdet)/da path uses the factor's inverse diagonal.

#include <memory>

#include "vinet/bayes.hpp"
#include "vinet/net/model.hpp"
#include "vinet/stencil_ops.hpp"

namespace vinet::net {

// Fixed per-experiment pieces of the loss (built once, shared across items).
struct ElboContext {
  grid::Grid inv_grid;
  std::shared_ptr<const forward::LinearForward> H;  // inversion-grid operator
  double eps0_inv = 5.0;
  double delta = 0.2;
  bayes::IGParams ig0;  // hyperprior
  std::shared_ptr<const stencil::Factor> M0;  // constant-coefficient prior factor
  std::vector<double> quad_w;
  double logdet_M0 = 0.0;

  ElboContext() = default;
  ElboContext(const grid::Grid& g, std::shared_ptr<const forward::LinearForward> H_,
              double eps0_inv_, double delta_, bayes::IGParams ig0_);
};

struct ElboBreakdown {
  double i1 = 0.0, i2 = 0.0, i3 = 0.0, loss = 0.0;
};

// Differentiable apply of the inversion-grid forward operator
// (Euclidean backward = Om H*).
Value apply_forward(Tape& t, Value u_flat, const ElboContext& ctx);

// y = (diag(a) + delta L)^{-1} rhs with gradient into `a` (and rhs when it is
// a tracked value); the factorization is built here and shared by the caller.
Value stencil_solve(Tape& t, Value a, Value rhs, double delta,
                    std::shared_ptr<const stencil::Factor>& factor_out,
                    const grid::Grid& g);

// 2 * logdet(diag(a) + delta L) given the already-built factorization.
Value logdet_precision(Tape& t, Value a, std::shared_ptr<const stencil::Factor> factor);

// Negative ELBO for one item. alpha/beta come from snet_forward, mean/a from
// inet_forward (all on the tape); eta is the frozen white-noise field.
Value elbo_loss(Tape& t, Value mean, Value a, Value alpha, Value beta,
                const std::vector<double>& d, const grid::GridFunction& u0,
                const grid::GridFunction& eta_white, const ElboContext& ctx,
                ElboBreakdown* breakdown = nullptr);

// Stage-1 objective: MSE(d_hat, d_clean) - (I2 + I3 with residual d - d_hat).
Value stage1_loss(Tape& t, Value d_hat_img, Value alpha, Value beta,
                  const std::vector<double>& d_noisy, const std::vector<double>& d_clean,
                  const ElboContext& ctx);

} // namespace vinet::net
