#pragma once

// Sparse 5-point Neumann (mirror-boundary) shifted-Laplacian operators
// M = diag(a) + delta * (tx * Lxx + ty * Lyy) on the nodal layout of
// GridFunction. M is self-adjoint w.r.t. the trapezoid weights Om, so
// S = Om^{1/2} M Om^{-1/2} is symmetric; factorizations, log-determinants
// and inverse diagonals all go through S.

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "vinet/grid.hpp"

namespace vinet::stencil {

using SpMat = Eigen::SparseMatrix<double>;

// Nodal (non-symmetric) matrix of M; anisotropy via tx, ty (1,1 = isotropic).
SpMat shifted_laplacian(const grid::GridFunction& a, double delta, double tx = 1.0,
                        double ty = 1.0);

class Factor {
 public:
  Factor(const grid::GridFunction& a, double delta, double tx = 1.0, double ty = 1.0);

  const grid::Grid& grid() const { return grid_; }
  std::size_t size() const { return grid_.size(); }

  // log det M (= log det S; the similarity preserves the determinant).
  double logdet() const;

  // Solve M x = b / M^T x = b.
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::VectorXd solve_transpose(const Eigen::VectorXd& b) const;
  std::vector<double> solve(const std::vector<double>& b) const;
  std::vector<double> solve_transpose(const std::vector<double>& b) const;

  // Apply M / M^T.
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  std::vector<double> apply(const std::vector<double>& x) const;

  // diag(M^{-1}) (equals diag(S^{-1}); needed for d/da log det M).
  std::vector<double> diag_inverse() const;

  // Variance field of the Gaussian measure with covariance M^{-2}, expressed
  // in the weight-orthonormal coordinates: var_j = (S^{-2})_jj = ||S^{-1}e_j||^2.
  std::vector<double> pointwise_variance() const;

  const SpMat& nodal_matrix() const { return M_; }

 private:
  grid::Grid grid_;
  SpMat M_;  // nodal
  SpMat S_;  // symmetrized
  Eigen::SimplicialLDLT<SpMat> ldlt_;
  Eigen::VectorXd sqrt_w_, inv_sqrt_w_, w_;
};

} // namespace vinet::stencil
