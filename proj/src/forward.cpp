#include "vinet/forward.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>

#include "vinet/errors.hpp"

namespace vinet::forward {

SensorSet SensorSet::lattice(int m) {
  SensorSet s;
  s.points.reserve(static_cast<std::size_t>(m) * m);
  for (int k = 1; k <= m; ++k)
    for (int l = 1; l <= m; ++l)
      s.points.push_back({static_cast<double>(k) / m, static_cast<double>(l) / m});
  return s;
}

SensorSet SensorSet::boundary(int n) {
  SensorSet s;
  s.points.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double t = 4.0 * i / n;  // arc length along the unit-square boundary
    double x, y;
    if (t < 1.0) {
      x = t; y = 0.0;
    } else if (t < 2.0) {
      x = 1.0; y = t - 1.0;
    } else if (t < 3.0) {
      x = 3.0 - t; y = 1.0;
    } else {
      x = 0.0; y = 4.0 - t;
    }
    s.points.push_back({x, y});
  }
  return s;
}

void SensorSet::validate_inside(const grid::Grid& g) const {
  for (const auto& p : points) {
    if (p[0] < g.domain[0] - 1e-12 || p[0] > g.domain[2] + 1e-12 ||
        p[1] < g.domain[1] - 1e-12 || p[1] > g.domain[3] + 1e-12)
      throw std::invalid_argument("SensorSet: point outside the closed domain");
  }
}

PointSampler::PointSampler(const grid::Grid& g, const SensorSet& s) {
  s.validate_inside(g);
  nodes.reserve(s.count());
  weights.reserve(s.count());
  for (const auto& p : s.points) {
    const double sx = (p[0] - g.domain[0]) / g.hx();
    const double sy = (p[1] - g.domain[1]) / g.hy();
    int i = std::max(0, std::min(static_cast<int>(std::floor(sx)), g.nx - 2));
    int j = std::max(0, std::min(static_cast<int>(std::floor(sy)), g.ny - 2));
    const double tx = std::max(0.0, std::min(sx - i, 1.0));
    const double ty = std::max(0.0, std::min(sy - j, 1.0));
    const auto id = [&](int a, int b) { return static_cast<std::size_t>(a) * g.ny + b; };
    nodes.push_back({id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1)});
    weights.push_back({(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty});
  }
}

std::vector<double> PointSampler::sample(const grid::GridFunction& f) const {
  std::vector<double> d(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    const auto& w = weights[i];
    d[i] = w[0] * f.values[n[0]] + w[1] * f.values[n[1]] + w[2] * f.values[n[2]] +
           w[3] * f.values[n[3]];
  }
  return d;
}

std::vector<double> PointSampler::scatter(const std::vector<double>& v,
                                          std::size_t n_nodes) const {
  if (v.size() != nodes.size()) throw std::invalid_argument("PointSampler: size mismatch");
  std::vector<double> out(n_nodes, 0.0);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    const auto& w = weights[i];
    out[n[0]] += w[0] * v[i];
    out[n[1]] += w[1] * v[i];
    out[n[2]] += w[2] * v[i];
    out[n[3]] += w[3] * v[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Elliptic smoothing model
// ---------------------------------------------------------------------------

EllipticForward::EllipticForward(double alpha_pde, const grid::Grid& g, SensorSet sensors)
    : alpha_(alpha_pde), grid_(g), sensors_(std::move(sensors)), sampler_(g, sensors_) {
  if (!(alpha_pde > 0.0)) throw std::invalid_argument("EllipticForward: alpha_pde must be > 0");
  const auto w = grid::quad_weights(g);
  inv_quad_w_.resize(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) inv_quad_w_[i] = 1.0 / w[i];
}

double EllipticForward::gain(int k, int l) const {
  const double fx = k * M_PI / grid_.width();
  const double fy = l * M_PI / grid_.height();
  return 1.0 / (1.0 + alpha_ * (fx * fx + fy * fy));
}

grid::GridFunction EllipticForward::smooth(const grid::GridFunction& u) const {
  if (!(u.grid == grid_)) throw std::invalid_argument("EllipticForward: grid mismatch");
  grid::SpectrumField s = grid::dct2(u);
  for (int k = 0; k < grid_.nx; ++k)
    for (int l = 0; l < grid_.ny; ++l)
      s.coeffs[static_cast<std::size_t>(k) * grid_.ny + l] *= gain(k, l);
  return grid::idct2(s);
}

std::vector<double> EllipticForward::apply(const grid::GridFunction& u) const {
  return sampler_.sample(smooth(u));
}

grid::GridFunction EllipticForward::adjoint(const std::vector<double>& v) const {
  if (v.size() != sensors_.count())
    throw std::invalid_argument("EllipticForward::adjoint: data dim mismatch");
  std::vector<double> nodal = sampler_.scatter(v, grid_.size());
  for (std::size_t i = 0; i < nodal.size(); ++i) nodal[i] *= inv_quad_w_[i];
  return smooth(grid::GridFunction(grid_, std::move(nodal)));
}

// ---------------------------------------------------------------------------
// Helmholtz with PML
// ---------------------------------------------------------------------------

namespace {

struct PmlLayout {
  grid::Grid inner;   // the source/inversion grid on [0,1]^2
  grid::Grid solver;  // padded grid covering D
  int pad_x = 0;
  int pad_y = 0;
  double dx1 = 0.0;  // realized PML thickness (pad * h)
  double dy1 = 0.0;

  std::size_t solver_id(int i, int j) const {
    return static_cast<std::size_t>(i) * solver.ny + j;
  }
};

PmlLayout make_layout(const grid::Grid& inner, const PmlConfig& pml) {
  grid::validate(inner);
  if (!(pml.thickness > 0.0) || !(pml.strength > 0.0) || pml.profile_exponent < 1)
    throw std::invalid_argument("PmlConfig: invalid parameters");
  PmlLayout L;
  L.inner = inner;
  L.pad_x = std::max(2, static_cast<int>(std::lround(pml.thickness / inner.hx())));
  L.pad_y = std::max(2, static_cast<int>(std::lround(pml.thickness / inner.hy())));
  L.dx1 = L.pad_x * inner.hx();
  L.dy1 = L.pad_y * inner.hy();
  L.solver.nx = inner.nx + 2 * L.pad_x;
  L.solver.ny = inner.ny + 2 * L.pad_y;
  L.solver.domain = {inner.domain[0] - L.dx1, inner.domain[1] - L.dy1,
                     inner.domain[2] + L.dx1, inner.domain[3] + L.dy1};
  return L;
}

using Cplx = std::complex<double>;
using CSpMat = Eigen::SparseMatrix<Cplx>;
using CVec = Eigen::VectorXcd;

// sigma(t): zero inside the physical domain, polynomial ramp inside the layer
double pml_sigma(double t, double lo, double hi, double d, double s0, int p) {
  if (t < lo) return s0 * std::pow((lo - t) / d, p);
  if (t > hi) return s0 * std::pow((t - hi) / d, p);
  return 0.0;
}

} // namespace

// One factorized PML problem for a fixed (inner grid, kappa, pml).
class HelmholtzFactor {
 public:
  HelmholtzFactor(const grid::Grid& inner, double kappa, const PmlConfig& pml)
      : layout_(make_layout(inner, pml)), kappa_(kappa) {
    if (!(kappa > 0.0)) throw std::invalid_argument("Helmholtz: kappa must be > 0");
    const grid::Grid& S = layout_.solver;
    const int nx = S.nx, ny = S.ny;
    const double hx = S.hx(), hy = S.hy();
    const auto& dom = layout_.inner.domain;

    const auto s1 = [&](double x) {
      return Cplx(1.0, pml_sigma(x, dom[0], dom[2], layout_.dx1, pml.strength,
                                 pml.profile_exponent));
    };
    const auto s2 = [&](double y) {
      return Cplx(1.0, pml_sigma(y, dom[1], dom[3], layout_.dy1, pml.strength,
                                 pml.profile_exponent));
    };

    // interior unknowns (Dirichlet w = 0 on the outer boundary)
    unknown_.assign(S.size(), -1);
    int m = 0;
    for (int i = 1; i < nx - 1; ++i)
      for (int j = 1; j < ny - 1; ++j) unknown_[layout_.solver_id(i, j)] = m++;
    n_unknowns_ = m;

    std::vector<Eigen::Triplet<Cplx>> trip;
    trip.reserve(5 * static_cast<std::size_t>(m));
    for (int i = 1; i < nx - 1; ++i) {
      for (int j = 1; j < ny - 1; ++j) {
        const int row = unknown_[layout_.solver_id(i, j)];
        const double x = S.x(i), y = S.y(j);
        const Cplx sx_e = s2(y) / s1(x + 0.5 * hx);
        const Cplx sx_w = s2(y) / s1(x - 0.5 * hx);
        const Cplx sy_n = s1(x) / s2(y + 0.5 * hy);
        const Cplx sy_s = s1(x) / s2(y - 0.5 * hy);
        Cplx diag = -(sx_e + sx_w) / (hx * hx) - (sy_n + sy_s) / (hy * hy) +
                    kappa * kappa * s1(x) * s2(y);
        trip.emplace_back(row, row, diag);
        const auto couple = [&](int ii, int jj, Cplx w) {
          const int col = unknown_[layout_.solver_id(ii, jj)];
          if (col >= 0) trip.emplace_back(row, col, w);
          // Dirichlet neighbors contribute nothing (w = 0 there)
        };
        couple(i + 1, j, sx_e / (hx * hx));
        couple(i - 1, j, sx_w / (hx * hx));
        couple(i, j + 1, sy_n / (hy * hy));
        couple(i, j - 1, sy_s / (hy * hy));
      }
    }
    A_.resize(m, m);
    A_.setFromTriplets(trip.begin(), trip.end());
    A_.makeCompressed();
    lu_.compute(A_);
    if (lu_.info() != Eigen::Success)
      throw SolverError("helmholtz_solve: singular PML system (resonant kappa?); "
                        "retry with a thicker PML");
  }

  const PmlLayout& layout() const { return layout_; }
  double kappa() const { return kappa_; }

  // Solve A w = rhs (rhs on unknowns); complex symmetric, so A^T = A and the
  // same factorization serves the adjoint.
  CVec solve(const CVec& rhs) const {
    CVec w = lu_.solve(rhs);
    if (lu_.info() != Eigen::Success)
      throw SolverError("helmholtz_solve: LU backsubstitution failed");
    const double rn = rhs.norm();
    if (rn > 0.0) {
      const double res = (A_ * w - rhs).norm() / rn;
      if (!(res <= 1e-10))
        throw SolverError("helmholtz_solve: residual too large (near-singular system); "
                          "retry with a thicker PML",
                          res);
    }
    return w;
  }

  // Embed a source on the inner grid into the unknown vector.
  CVec embed(const grid::GridFunction& u) const {
    CVec rhs = CVec::Zero(n_unknowns_);
    const grid::Grid& in = layout_.inner;
    for (int i = 0; i < in.nx; ++i)
      for (int j = 0; j < in.ny; ++j) {
        const int k =
            unknown_[layout_.solver_id(i + layout_.pad_x, j + layout_.pad_y)];
        rhs[k] = u.at(i, j);
      }
    return rhs;
  }

  // Extract the inner-grid restriction of a cotangent on the unknowns.
  std::vector<double> extract_real(const CVec& z) const {
    const grid::Grid& in = layout_.inner;
    std::vector<double> out(in.size());
    for (int i = 0; i < in.nx; ++i)
      for (int j = 0; j < in.ny; ++j) {
        const int k =
            unknown_[layout_.solver_id(i + layout_.pad_x, j + layout_.pad_y)];
        out[static_cast<std::size_t>(i) * in.ny + j] = z[k].real();
      }
    return out;
  }

  // Scatter the unknown vector onto the full solver grid (zeros on boundary).
  CField full_field(const CVec& w) const {
    CField f(layout_.solver.size(), Cplx(0.0, 0.0));
    for (std::size_t id = 0; id < unknown_.size(); ++id)
      if (unknown_[id] >= 0) f[id] = w[unknown_[id]];
    return f;
  }

  int unknown_at(std::size_t solver_node) const { return unknown_[solver_node]; }
  int n_unknowns() const { return n_unknowns_; }

 private:
  PmlLayout layout_;
  double kappa_;
  std::vector<int> unknown_;
  int n_unknowns_ = 0;
  CSpMat A_;
  Eigen::SparseLU<CSpMat> lu_;
};

namespace {

// Process-wide factor cache (datagen, CECInv builds and inversion share it).
class FactorCache {
 public:
  static FactorCache& instance() {
    static FactorCache c;
    return c;
  }

  std::shared_ptr<const HelmholtzFactor> get(const grid::Grid& g, double kappa,
                                             const PmlConfig& pml) {
    const Key key{g.nx, g.ny, g.domain, kappa, pml.thickness, pml.strength,
                  pml.profile_exponent};
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = cache_.find(key);
      if (it != cache_.end()) return it->second;
    }
    auto factor = std::make_shared<const HelmholtzFactor>(g, kappa, pml);
    std::lock_guard<std::mutex> lock(mu_);
    return cache_.emplace(key, std::move(factor)).first->second;
  }

 private:
  using Key = std::tuple<int, int, std::array<double, 4>, double, double, double, int>;
  std::mutex mu_;
  std::map<Key, std::shared_ptr<const HelmholtzFactor>> cache_;
};

} // namespace

HelmholtzSolution helmholtz_solve(const grid::GridFunction& u, double kappa,
                                  const PmlConfig& pml) {
  auto factor = FactorCache::instance().get(u.grid, kappa, pml);
  CVec w = factor->solve(factor->embed(u));
  return HelmholtzSolution{factor->layout().solver, factor->full_field(w)};
}

HelmholtzForward::HelmholtzForward(const grid::Grid& g, std::vector<double> kappas,
                                   PmlConfig pml, SensorSet boundary_sensors)
    : grid_(g), kappas_(std::move(kappas)), pml_(pml), sensors_(std::move(boundary_sensors)) {
  if (kappas_.empty()) throw std::invalid_argument("HelmholtzForward: empty kappa list");
  for (std::size_t f = 1; f < kappas_.size(); ++f)
    if (!(kappas_[f] > kappas_[f - 1]))
      throw std::invalid_argument("HelmholtzForward: kappas must be strictly ascending");
  // resolve the largest wavenumber with >= 10 nodes per wavelength
  const double lambda_min = 2.0 * M_PI / kappas_.back();
  const double hmax = std::max(g.hx(), g.hy());
  if (hmax > lambda_min / 10.0 + 1e-12)
    throw std::invalid_argument(
        "HelmholtzForward: grid too coarse for the largest wavenumber (need >= 10 points "
        "per wavelength)");
  sensors_.validate_inside(g);
  factors_.reserve(kappas_.size());
  for (double k : kappas_) factors_.push_back(FactorCache::instance().get(g, k, pml_));
  solver_sampler_ = PointSampler(factors_.front()->layout().solver, sensors_);
  const auto w = grid::quad_weights(g);
  inv_quad_w_.resize(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) inv_quad_w_[i] = 1.0 / w[i];
}

std::size_t HelmholtzForward::data_dim() const {
  return kappas_.size() * block_size();
}

std::vector<double> HelmholtzForward::apply_one(const grid::GridFunction& u,
                                                std::size_t f) const {
  const auto& factor = *factors_[f];
  CVec w = factor.solve(factor.embed(u));
  const PointSampler& sampler = solver_sampler_;
  const CField field = factor.full_field(w);
  const std::size_t nb = sensors_.count();
  std::vector<double> block(2 * nb);
  for (std::size_t i = 0; i < nb; ++i) {
    Cplx val(0.0, 0.0);
    for (int c = 0; c < 4; ++c) val += sampler.weights[i][c] * field[sampler.nodes[i][c]];
    block[i] = val.real();
    block[nb + i] = val.imag();
  }
  return block;
}

std::vector<double> HelmholtzForward::apply(const grid::GridFunction& u) const {
  if (!(u.grid == grid_)) throw std::invalid_argument("HelmholtzForward: grid mismatch");
  std::vector<double> d(data_dim());
  for (std::size_t f = 0; f < kappas_.size(); ++f) {
    const std::vector<double> block = apply_one(u, f);
    std::copy(block.begin(), block.end(), d.begin() + f * block_size());
  }
  return d;
}

void HelmholtzForward::adjoint_one(const std::vector<double>& block, std::size_t f,
                                   std::vector<double>& acc) const {
  const auto& factor = *factors_[f];
  const std::size_t nb = sensors_.count();
  // cotangent zeta = v_re + i v_im at the sensors; scatter S^T conj(zeta)
  const PointSampler& sampler = solver_sampler_;
  CVec rhs = CVec::Zero(factor.n_unknowns());
  for (std::size_t i = 0; i < nb; ++i) {
    const Cplx cz(block[i], -block[nb + i]);  // conj(zeta_i)
    for (int c = 0; c < 4; ++c) {
      const int k = factor.unknown_at(sampler.nodes[i][c]);
      if (k >= 0) rhs[k] += sampler.weights[i][c] * cz;
    }
  }
  // A is complex symmetric: A^T = A, one more solve with the same factor
  CVec z = factor.solve(rhs);
  const std::vector<double> g = factor.extract_real(z);
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

grid::GridFunction HelmholtzForward::adjoint(const std::vector<double>& v) const {
  if (v.size() != data_dim())
    throw std::invalid_argument("HelmholtzForward::adjoint: data dim mismatch");
  std::vector<double> acc(grid_.size(), 0.0);
  for (std::size_t f = 0; f < kappas_.size(); ++f) {
    const std::vector<double> block(v.begin() + f * block_size(),
                                    v.begin() + (f + 1) * block_size());
    adjoint_one(block, f, acc);
  }
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] *= inv_quad_w_[i];
  return grid::GridFunction(grid_, std::move(acc));
}

std::shared_ptr<HelmholtzForward> HelmholtzForward::single_frequency(std::size_t idx) const {
  if (idx >= kappas_.size()) throw std::out_of_range("single_frequency: bad index");
  return std::make_shared<HelmholtzForward>(grid_, std::vector<double>{kappas_[idx]}, pml_,
                                            sensors_);
}

} // namespace vinet::forward
