#include "vinet/stencil_ops.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "vinet/errors.hpp"

namespace vinet::stencil {

SpMat shifted_laplacian(const grid::GridFunction& a, double delta, double tx, double ty) {
  const grid::Grid& g = a.grid;
  grid::validate(g);
  const int nx = g.nx, ny = g.ny;
  const double cx = tx / (g.hx() * g.hx());
  const double cy = ty / (g.hy() * g.hy());
  const auto id = [ny](int i, int j) { return static_cast<std::size_t>(i) * ny + j; };

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(5 * g.size());
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      double diag = a.at(i, j) + 2.0 * delta * (cx + cy);
      // mirror boundary: the ghost neighbor folds onto the interior one
      const double wxm = delta * cx * ((i == 0) ? 0.0 : 1.0);
      const double wxp = delta * cx * ((i == nx - 1) ? 0.0 : 1.0);
      const double wym = delta * cy * ((j == 0) ? 0.0 : 1.0);
      const double wyp = delta * cy * ((j == ny - 1) ? 0.0 : 1.0);
      const double fold_x = delta * cx * ((i == 0 || i == nx - 1) ? 1.0 : 0.0);
      const double fold_y = delta * cy * ((j == 0 || j == ny - 1) ? 1.0 : 0.0);
      if (wxm > 0.0) trip.emplace_back(id(i, j), id(i - 1, j), -wxm);
      if (wxp > 0.0) trip.emplace_back(id(i, j), id(i + 1, j), -wxp);
      if (wym > 0.0) trip.emplace_back(id(i, j), id(i, j - 1), -wym);
      if (wyp > 0.0) trip.emplace_back(id(i, j), id(i, j + 1), -wyp);
      if (fold_x > 0.0)
        trip.emplace_back(id(i, j), id(i == 0 ? 1 : nx - 2, j), -fold_x);
      if (fold_y > 0.0)
        trip.emplace_back(id(i, j), id(i, j == 0 ? 1 : ny - 2), -fold_y);
      trip.emplace_back(id(i, j), id(i, j), diag);
    }
  }
  SpMat M(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(g.size()));
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

Factor::Factor(const grid::GridFunction& a, double delta, double tx, double ty)
    : grid_(a.grid), M_(shifted_laplacian(a, delta, tx, ty)) {
  const std::vector<double> w = grid::quad_weights(grid_);
  const auto n = static_cast<Eigen::Index>(w.size());
  w_.resize(n);
  sqrt_w_.resize(n);
  inv_sqrt_w_.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    w_[i] = w[static_cast<std::size_t>(i)];
    sqrt_w_[i] = std::sqrt(w_[i]);
    inv_sqrt_w_[i] = 1.0 / sqrt_w_[i];
  }
  S_ = sqrt_w_.asDiagonal() * M_ * inv_sqrt_w_.asDiagonal();
  S_ = 0.5 * (SpMat(S_.transpose()) + S_);  // clean up rounding asymmetry
  ldlt_.compute(S_);
  if (ldlt_.info() != Eigen::Success)
    throw SolverError("stencil::Factor: sparse Cholesky failed (operator not SPD?)");
}

double Factor::logdet() const {
  const auto& D = ldlt_.vectorD();
  double s = 0.0;
  for (Eigen::Index i = 0; i < D.size(); ++i) {
    if (!(D[i] > 0.0)) throw SolverError("stencil::Factor: non-positive pivot in LDLT");
    s += std::log(D[i]);
  }
  return s;
}

Eigen::VectorXd Factor::solve(const Eigen::VectorXd& b) const {
  // M^{-1} = Om^{-1/2} S^{-1} Om^{1/2}
  Eigen::VectorXd y = ldlt_.solve((sqrt_w_.array() * b.array()).matrix());
  return (inv_sqrt_w_.array() * y.array()).matrix();
}

Eigen::VectorXd Factor::solve_transpose(const Eigen::VectorXd& b) const {
  // M^{-T} = Om^{1/2} S^{-1} Om^{-1/2}
  Eigen::VectorXd y = ldlt_.solve((inv_sqrt_w_.array() * b.array()).matrix());
  return (sqrt_w_.array() * y.array()).matrix();
}

Eigen::VectorXd Factor::apply(const Eigen::VectorXd& x) const { return M_ * x; }

namespace {
Eigen::VectorXd to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}
std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}
} // namespace

std::vector<double> Factor::solve(const std::vector<double>& b) const {
  return to_std(solve(to_vec(b)));
}
std::vector<double> Factor::solve_transpose(const std::vector<double>& b) const {
  return to_std(solve_transpose(to_vec(b)));
}
std::vector<double> Factor::apply(const std::vector<double>& x) const {
  return to_std(apply(to_vec(x)));
}

std::vector<double> Factor::diag_inverse() const {
  // (M^{-1})_jj = (S^{-1})_jj = sum_i y_i^2 / D_i with y = L^{-1} P e_j.
  const auto n = static_cast<Eigen::Index>(size());
  const auto& P = ldlt_.permutationP();
  const auto& D = ldlt_.vectorD();
  std::vector<double> out(size());
  Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    e.setZero();
    e[j] = 1.0;
    Eigen::VectorXd y = P * e;
    ldlt_.matrixL().solveInPlace(y);
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (y[i] != 0.0) s += y[i] * y[i] / D[i];
    out[static_cast<std::size_t>(j)] = s;
  }
  return out;
}

std::vector<double> Factor::pointwise_variance() const {
  // diag(S^{-2}) in the weight-orthonormal coordinates
  const auto n = static_cast<Eigen::Index>(size());
  std::vector<double> out(size());
  Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    e.setZero();
    e[j] = 1.0;
    Eigen::VectorXd y = ldlt_.solve(e);
    out[static_cast<std::size_t>(j)] = y.squaredNorm();
  }
  return out;
}

} // namespace vinet::stencil
