#pragma once

// The two linear forward operators and their exact discrete adjoints with
// respect to the trapezoid L2 inner product: the elliptic smoothing model
// (spectral) and the multi-frequency Helmholtz model with a PML (complex
// sparse direct solves), plus point-observation sensor sets.

#include <array>
#include <complex>
#include <memory>
#include <vector>

#include "vinet/grid.hpp"

namespace vinet::forward {

struct SensorSet {
  std::vector<std::array<double, 2>> points;

  std::size_t count() const { return points.size(); }
  // {(k/m, l/m)} for k,l = 1..m (the measurement lattice of the smoothing model).
  static SensorSet lattice(int m);
  // n points equally spaced (by arc length) along the boundary of [0,1]^2.
  static SensorSet boundary(int n);
  void validate_inside(const grid::Grid& g) const;
};

// Precomputed bilinear sampling: d_i = sum_c weight[i][c] * f[node[i][c]].
struct PointSampler {
  std::vector<std::array<std::size_t, 4>> nodes;
  std::vector<std::array<double, 4>> weights;

  PointSampler() = default;
  PointSampler(const grid::Grid& g, const SensorSet& s);
  std::vector<double> sample(const grid::GridFunction& f) const;
  // Transpose: scatter data-space cotangents onto the nodal array.
  std::vector<double> scatter(const std::vector<double>& v, std::size_t n_nodes) const;
};

class LinearForward {
 public:
  virtual ~LinearForward() = default;
  virtual const grid::Grid& domain_grid() const = 0;
  virtual std::size_t data_dim() const = 0;
  virtual std::vector<double> apply(const grid::GridFunction& u) const = 0;
  // Exact adjoint w.r.t. (trapezoid L2, Euclidean).
  virtual grid::GridFunction adjoint(const std::vector<double>& v) const = 0;
};

// Inverse source problem of -alpha*Lap(w) + w = u with Neumann boundary,
// observed at point sensors. Solved spectrally: mode (k,l) is damped by
// g_kl = 1/(1 + alpha * pi^2 (k^2 + l^2)).
class EllipticForward final : public LinearForward {
 public:
  EllipticForward(double alpha_pde, const grid::Grid& g, SensorSet sensors);

  const grid::Grid& domain_grid() const override { return grid_; }
  std::size_t data_dim() const override { return sensors_.count(); }
  std::vector<double> apply(const grid::GridFunction& u) const override;
  grid::GridFunction adjoint(const std::vector<double>& v) const override;

  // The smoothing step alone (u -> w), exposed for oracles.
  grid::GridFunction smooth(const grid::GridFunction& u) const;
  double gain(int k, int l) const;
  double alpha_pde() const { return alpha_; }
  const SensorSet& sensors() const { return sensors_; }

 private:
  double alpha_;
  grid::Grid grid_;
  SensorSet sensors_;
  PointSampler sampler_;
  std::vector<double> inv_quad_w_;
};

struct PmlConfig {
  double thickness = 0.2;   // per side, in domain units
  double strength = 20.0;   // sigma_0
  int profile_exponent = 2; // sigma(t) = sigma_0 * (t/d)^p inside the layer

  bool operator==(const PmlConfig&) const = default;
};

// One factorized PML Helmholtz problem: grad.(s grad w) + kappa^2 s1 s2 w = u
// on D = [-d,1+d]^2 with w = 0 on the boundary of D; 5-point complex-symmetric
// FD stencil, sparse LU. Reused across solves (read-mostly cache).
class HelmholtzFactor;

using CField = std::vector<std::complex<double>>;

// Solves the truncated PML problem for a source supported on u's grid.
// Returns the complex field on the padded solver grid (row-major) together
// with that grid's layout. Throws SolverError on a (near-)singular system.
struct HelmholtzSolution {
  grid::Grid solver_grid;
  CField field;
};
HelmholtzSolution helmholtz_solve(const grid::GridFunction& u, double kappa,
                                  const PmlConfig& pml);

class HelmholtzForward final : public LinearForward {
 public:
  HelmholtzForward(const grid::Grid& g, std::vector<double> kappas, PmlConfig pml,
                   SensorSet boundary_sensors);

  const grid::Grid& domain_grid() const override { return grid_; }
  // 2 * N_b * N_f (Re block then Im block per frequency, ascending kappa).
  std::size_t data_dim() const override;
  std::vector<double> apply(const grid::GridFunction& u) const override;
  grid::GridFunction adjoint(const std::vector<double>& v) const override;

  std::size_t n_freq() const { return kappas_.size(); }
  std::size_t block_size() const { return 2 * sensors_.count(); }
  const std::vector<double>& kappas() const { return kappas_; }
  const PmlConfig& pml() const { return pml_; }
  const SensorSet& sensors() const { return sensors_; }

  // Single-frequency sub-operator (shares the cached factorization).
  std::shared_ptr<HelmholtzForward> single_frequency(std::size_t idx) const;

 private:
  std::vector<double> apply_one(const grid::GridFunction& u, std::size_t f) const;
  void adjoint_one(const std::vector<double>& block, std::size_t f,
                   std::vector<double>& acc) const;

  grid::Grid grid_;
  std::vector<double> kappas_;
  PmlConfig pml_;
  SensorSet sensors_;
  std::vector<std::shared_ptr<const HelmholtzFactor>> factors_;
  PointSampler solver_sampler_;  // sensors on the padded solver grid
  std::vector<double> inv_quad_w_;
};

} // namespace vinet::forward
