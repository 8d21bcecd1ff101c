#include "vinet/classical.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vinet/errors.hpp"
#include "vinet/kernels.hpp"
#include "vinet/prior.hpp"

namespace vinet::classical {

EigPairs randomized_eig(const OpAction& action, const grid::Grid& g, int rank,
                        int oversample, Rng& rng) {
  if (rank < 1 || oversample < 0) throw std::invalid_argument("randomized_eig: bad rank/oversample");
  const int m = rank + oversample;
  if (static_cast<std::size_t>(m) > g.size())
    throw std::invalid_argument("randomized_eig: rank + oversample exceeds dimension");

  // pass 1: sketch the range
  std::vector<grid::GridFunction> Y;
  Y.reserve(m);
  for (int i = 0; i < m; ++i) Y.push_back(action(prior::white_noise(g, rng)));

  // modified Gram-Schmidt (twice) in the weighted inner product
  std::vector<grid::GridFunction> Q;
  Q.reserve(m);
  double top_norm = 0.0;
  for (auto& y : Y) top_norm = std::max(top_norm, grid::norm_l2(y));
  for (auto& y : Y) {
    grid::GridFunction q = y;
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& qj : Q) {
        const double c = grid::inner_l2(q, qj);
        kernels::axpy(-c, qj.values.data(), q.values.data(), q.values.size());
      }
    const double nq = grid::norm_l2(q);
    if (nq <= 1e-12 * std::max(top_norm, 1e-300)) continue;  // numerically dependent sketch
    kernels::scal(1.0 / nq, q.values.data(), q.values.size());
    Q.push_back(std::move(q));
  }

  EigPairs out;
  if (Q.empty()) {
    out.rank_deficient = true;
    return out;
  }

  // pass 2: projected operator
  const int q = static_cast<int>(Q.size());
  Eigen::MatrixXd T(q, q);
  for (int j = 0; j < q; ++j) {
    const grid::GridFunction Aqj = action(Q[j]);
    for (int i = 0; i < q; ++i) T(i, j) = grid::inner_l2(Q[i], Aqj);
  }
  T = 0.5 * (T + T.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
  if (es.info() != Eigen::Success) throw SolverError("randomized_eig: eigensolver failed");

  const int keep = std::min(rank, q);
  out.rank_deficient = keep < rank;
  for (int r = 0; r < keep; ++r) {
    const int idx = q - 1 - r;  // Eigen sorts ascending
    const double lam = es.eigenvalues()[idx];
    grid::GridFunction v(g);
    for (int j = 0; j < q; ++j)
      kernels::axpy(es.eigenvectors()(j, idx), Q[j].values.data(), v.values.data(),
                    v.values.size());
    out.values.push_back(lam);
    out.vectors.push_back(std::move(v));
  }
  return out;
}

grid::GridFunction tsvd_invert(const std::vector<double>& d, const EigPairs& eig,
                               const forward::LinearForward& H, double lambda_m) {
  if (!(lambda_m > 0.0)) throw std::invalid_argument("tsvd_invert: lambda_m must be > 0");
  const grid::GridFunction hd = H.adjoint(d);
  grid::GridFunction out(H.domain_grid());
  for (std::size_t k = 0; k < eig.values.size(); ++k) {
    if (eig.values[k] < lambda_m) break;  // values sorted descending
    const double c = grid::inner_l2(hd, eig.vectors[k]) / eig.values[k];
    kernels::axpy(c, eig.vectors[k].values.data(), out.values.data(), out.values.size());
  }
  return out;
}

namespace {

double estimate_lambda_max(const forward::HelmholtzForward& Hk, int iters, Rng& rng) {
  grid::GridFunction x = prior::white_noise(Hk.domain_grid(), rng);
  double lam = 0.0;
  for (int i = 0; i < iters; ++i) {
    const double nx = grid::norm_l2(x);
    if (!(nx > 0.0)) throw SolverError("rlm: power iteration collapsed");
    kernels::scal(1.0 / nx, x.values.data(), x.values.size());
    grid::GridFunction y = Hk.adjoint(Hk.apply(x));
    lam = grid::inner_l2(x, y);
    x = std::move(y);
  }
  return lam;
}

double data_norm(const std::vector<double>& v) {
  return std::sqrt(kernels::dot(v.data(), v.data(), v.size()));
}

} // namespace

RlmResult rlm_invert(const std::vector<double>& d_multifreq,
                     const forward::HelmholtzForward& H, const RlmConfig& cfg) {
  if (cfg.kappas.empty() || cfg.inner < 1) throw std::invalid_argument("rlm: bad config");
  for (std::size_t i = 1; i < cfg.kappas.size(); ++i)
    if (!(cfg.kappas[i] > cfg.kappas[i - 1]))
      throw std::invalid_argument("rlm: schedule must be strictly ascending");

  // map schedule entries onto H's frequency blocks
  std::vector<std::size_t> freq_idx;
  for (double k : cfg.kappas) {
    auto it = std::find(H.kappas().begin(), H.kappas().end(), k);
    if (it == H.kappas().end())
      throw std::invalid_argument("rlm: schedule kappa not present in the forward operator");
    freq_idx.push_back(static_cast<std::size_t>(it - H.kappas().begin()));
  }
  const std::size_t bs = H.block_size();
  if (d_multifreq.size() != cfg.kappas.size() * bs)
    throw std::invalid_argument("rlm: data length does not cover the schedule");

  Rng rng(cfg.seed);
  RlmResult res;
  res.estimate = grid::GridFunction(H.domain_grid());  // zero initial guess

  for (std::size_t s = 0; s < freq_idx.size(); ++s) {
    const auto Hk = H.single_frequency(freq_idx[s]);
    const std::vector<double> dk(d_multifreq.begin() + s * bs,
                                 d_multifreq.begin() + (s + 1) * bs);
    double tau = cfg.step_override;
    if (!(tau > 0.0)) {
      const double lam = estimate_lambda_max(*Hk, cfg.power_iters, rng);
      if (!(lam > 0.0)) throw SolverError("rlm: nonpositive lambda_max estimate");
      tau = cfg.step_fraction / lam;
    }
    res.steps.push_back(tau);

    std::vector<double> r = Hk->apply(res.estimate);
    kernels::sub(dk.data(), r.data(), r.data(), r.size());
    double res0 = data_norm(r);
    double prev = res0;
    int grew = 0;
    for (int it = 0; it < cfg.inner; ++it) {
      const grid::GridFunction g = Hk->adjoint(r);
      kernels::axpy(tau, g.values.data(), res.estimate.values.data(),
                    res.estimate.values.size());
      r = Hk->apply(res.estimate);
      kernels::sub(dk.data(), r.data(), r.data(), r.size());
      const double rn = data_norm(r);
      if (rn > prev * (1.0 + 1e-12)) ++grew;
      prev = rn;
    }
    res.residuals.push_back(prev);
    if (grew >= std::max(2, cfg.inner / 2) && prev > res0) {
      res.diverged = true;  // step too large for this stage
      break;
    }
  }
  return res;
}

} // namespace vinet::classical
