#include "vinet/mfvi.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "vinet/errors.hpp"
#include "vinet/kernels.hpp"

namespace vinet::mfvi {

namespace {

double wnorm(const std::vector<double>& w, const std::vector<double>& x) {
  return std::sqrt(kernels::wdot(w.data(), x.data(), x.data(), x.size()));
}

} // namespace

grid::GridFunction GaussianPosterior::precision_apply(const grid::GridFunction& f) const {
  std::vector<double> df = H->apply(f);
  for (std::size_t i = 0; i < df.size(); ++i) df[i] *= s_inv[i];
  grid::GridFunction out = H->adjoint(df);
  const grid::GridFunction pc = prior_cov->inv_apply(f);
  kernels::axpy(1.0, pc.values.data(), out.values.data(), out.values.size());
  return out;
}

grid::GridFunction GaussianPosterior::covariance_solve(const grid::GridFunction& rhs) const {
  // PCG in the trapezoid inner product, preconditioner C0.
  const grid::Grid& g = rhs.grid;
  const std::vector<double> w = grid::quad_weights(g);
  const std::size_t n = g.size();

  grid::GridFunction x(g);
  std::vector<double> r = rhs.values;  // r = b - P x0, x0 = 0
  const double bnorm = wnorm(w, r);
  if (bnorm == 0.0) return x;

  grid::GridFunction z = prior_cov->apply(grid::GridFunction(g, r));
  std::vector<double> p = z.values;
  double rz = kernels::wdot(w.data(), r.data(), z.values.data(), n);

  for (int it = 0; it < cg.max_iter; ++it) {
    const grid::GridFunction Ap = precision_apply(grid::GridFunction(g, p));
    const double pAp = kernels::wdot(w.data(), p.data(), Ap.values.data(), n);
    if (!(pAp > 0.0))
      throw SolverError("mfvi CG: precision action lost positive definiteness", pAp);
    const double alpha = rz / pAp;
    kernels::axpy(alpha, p.data(), x.values.data(), n);
    kernels::axpy(-alpha, Ap.values.data(), r.data(), n);
    const double rnorm = wnorm(w, r);
    if (rnorm <= cg.tol * bnorm) return x;
    z = prior_cov->apply(grid::GridFunction(g, r));
    const double rz_new = kernels::wdot(w.data(), r.data(), z.values.data(), n);
    kernels::aypx(rz_new / rz, z.values.data(), p.data(), n);
    rz = rz_new;
  }
  throw SolverError("mfvi CG: no convergence within max_iter", wnorm(w, r) / bnorm);
}

std::vector<double> sigma_inv_star(const bayes::IGParams& p) {
  std::vector<double> s(p.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = p.alpha[i] / p.beta[i];
  return s;
}

GaussianPosterior update_u(std::shared_ptr<const forward::LinearForward> H,
                           const std::vector<double>& d, const prior::GaussianMeasure& prior,
                           std::vector<double> s_inv, const CgConfig& cg) {
  if (d.size() != H->data_dim() || s_inv.size() != d.size())
    throw std::invalid_argument("update_u: dimension mismatch");
  GaussianPosterior post;
  post.H = std::move(H);
  post.prior_cov = prior.cov;
  post.s_inv = std::move(s_inv);
  post.cg = cg;

  // rhs = H* Sinv d + C0^{-1} u0
  std::vector<double> sd(d);
  for (std::size_t i = 0; i < sd.size(); ++i) sd[i] *= post.s_inv[i];
  grid::GridFunction rhs = post.H->adjoint(sd);
  const grid::GridFunction pu0 = prior.cov->inv_apply(prior.mean);
  kernels::axpy(1.0, pu0.values.data(), rhs.values.data(), rhs.values.size());

  post.mean = post.covariance_solve(rhs);
  return post;
}

double expected_residual(std::size_t i, const GaussianPosterior& post,
                         const std::vector<double>& d) {
  if (i >= d.size()) throw std::out_of_range("expected_residual: sensor index");
  const std::vector<double> Hu = post.H->apply(post.mean);
  std::vector<double> e(d.size(), 0.0);
  e[i] = 1.0;
  const grid::GridFunction hstar_e = post.H->adjoint(e);
  const grid::GridFunction cp_hstar_e = post.covariance_solve(hstar_e);
  const double var_term = post.H->apply(cp_hstar_e)[i];
  const double r = d[i] - Hu[i];
  return r * r + var_term;
}

namespace {

// All sensors at once (shares the H u_p evaluation).
std::vector<double> expected_residuals_all(const GaussianPosterior& post,
                                           const std::vector<double>& d) {
  const std::vector<double> Hu = post.H->apply(post.mean);
  std::vector<double> out(d.size());
  std::vector<double> e(d.size(), 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    e.assign(d.size(), 0.0);
    e[i] = 1.0;
    const grid::GridFunction hstar_e = post.H->adjoint(e);
    const double var_term = post.H->apply(post.covariance_solve(hstar_e))[i];
    const double r = d[i] - Hu[i];
    out[i] = r * r + var_term;
  }
  return out;
}

} // namespace

bayes::IGParams update_sigma(const bayes::IGParams& ig0, const std::vector<double>& residuals) {
  if (residuals.size() != ig0.size())
    throw std::invalid_argument("update_sigma: dimension mismatch");
  std::vector<double> a(ig0.size()), b(ig0.size());
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    if (residuals[i] < 0.0) throw std::domain_error("update_sigma: negative residual");
    a[i] = ig0.alpha[i] + 0.5;
    b[i] = ig0.beta[i] + 0.5 * residuals[i];
  }
  return bayes::IGParams(std::move(a), std::move(b));
}

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Dense assembly of the discrete model in the weight-orthonormal coordinates
// (diagnostics only; the production path stays matrix-free).
struct DenseModel {
  Mat Hhat;      // N_d x n
  Mat C0hat;     // n x n
  Mat P0hat;     // C0hat^{-1}
  Vec sqrt_w;
  std::size_t n = 0;

  DenseModel(const forward::LinearForward& H, const prior::Covariance& cov) {
    const grid::Grid& g = H.domain_grid();
    n = g.size();
    const std::vector<double> w = grid::quad_weights(g);
    sqrt_w.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) sqrt_w[static_cast<Eigen::Index>(i)] = std::sqrt(w[i]);

    Hhat.resize(static_cast<Eigen::Index>(H.data_dim()), static_cast<Eigen::Index>(n));
    C0hat.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    P0hat.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    grid::GridFunction e(g);
    for (std::size_t j = 0; j < n; ++j) {
      std::fill(e.values.begin(), e.values.end(), 0.0);
      e.values[j] = 1.0 / sqrt_w[static_cast<Eigen::Index>(j)];  // Om^{-1/2} e_j
      const std::vector<double> col = H.apply(e);
      for (std::size_t i = 0; i < col.size(); ++i)
        Hhat(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
      const grid::GridFunction c = cov.apply(e);
      const grid::GridFunction p = cov.inv_apply(e);
      for (std::size_t i = 0; i < n; ++i) {
        C0hat(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            sqrt_w[static_cast<Eigen::Index>(i)] * c.values[i];
        P0hat(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            sqrt_w[static_cast<Eigen::Index>(i)] * p.values[i];
      }
    }
    C0hat = 0.5 * (C0hat + C0hat.transpose()).eval();
    P0hat = 0.5 * (P0hat + P0hat.transpose()).eval();
  }

  Vec hat(const std::vector<double>& nodal) const {
    Vec v(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
      v[static_cast<Eigen::Index>(i)] = sqrt_w[static_cast<Eigen::Index>(i)] * nodal[i];
    return v;
  }
};

double logdet_spd(const Mat& A) {
  Eigen::LLT<Mat> llt(A);
  if (llt.info() != Eigen::Success)
    throw SolverError("dense_elbo: matrix not positive definite");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

} // namespace

double dense_elbo(const GaussianPosterior& post, const bayes::IGParams& ig,
                  const std::vector<double>& d, const prior::GaussianMeasure& prior,
                  const bayes::IGParams& ig0) {
  const DenseModel M(*post.H, *prior.cov);
  const auto nd = static_cast<Eigen::Index>(d.size());
  const auto n = static_cast<Eigen::Index>(M.n);

  Vec sinv(nd);
  for (Eigen::Index i = 0; i < nd; ++i) sinv[i] = ig.alpha[i] / ig.beta[i];

  Mat Phat = M.P0hat + M.Hhat.transpose() * sinv.asDiagonal() * M.Hhat;
  Eigen::LLT<Mat> llt(Phat);
  if (llt.info() != Eigen::Success) throw SolverError("dense_elbo: posterior precision not SPD");
  const Mat Cp = llt.solve(Mat::Identity(n, n));

  const Vec up = M.hat(post.mean.values);
  const Vec u0 = M.hat(prior.mean.values);
  Vec dv(nd);
  for (Eigen::Index i = 0; i < nd; ++i) dv[i] = d[i];

  // -KL(nu_u || mu0_u)
  const double logdet_P0 = logdet_spd(M.P0hat);
  const double logdet_Pp = logdet_spd(Phat);
  const Vec du = up - u0;
  const double kl_u = 0.5 * ((M.P0hat * Cp).trace() - n + du.dot(M.P0hat * du) +
                             logdet_Pp - logdet_P0);

  double kl_sigma = 0.0;
  for (Eigen::Index i = 0; i < nd; ++i)
    kl_sigma += bayes::ig_kl(ig.alpha[i], ig.beta[i], ig0.alpha[i], ig0.beta[i]);

  // E[-Phi] = -1/2 sum_i sinv_i * (r_i^2 + (H C_p H^T)_ii) - 1/2 sum_i E[log sigma_i]
  const Vec r = dv - M.Hhat * up;
  const Mat HCpHt = M.Hhat * Cp * M.Hhat.transpose();
  double e_phi = 0.0;
  for (Eigen::Index i = 0; i < nd; ++i) {
    e_phi += 0.5 * sinv[i] * (r[i] * r[i] + HCpHt(i, i));
    e_phi += 0.5 * (std::log(ig.beta[i]) - bayes::digamma(ig.alpha[i]));
  }
  return -kl_u - kl_sigma - e_phi;
}

MfviResult run_mfvi(std::shared_ptr<const forward::LinearForward> H,
                    const std::vector<double>& d, const prior::GaussianMeasure& prior,
                    const bayes::IGParams& ig0, const MfviOptions& opt) {
  if (!(opt.tol > 0.0) || opt.k_max < 1) throw std::invalid_argument("run_mfvi: bad options");
  using clock = std::chrono::steady_clock;

  MfviResult res;
  res.ig = ig0;
  std::vector<double> prev_mean;
  std::vector<double> prev_var;  // beta / (alpha - 1)
  const std::vector<double> w = grid::quad_weights(H->domain_grid());

  const bool record_elbo =
      opt.elbo_dense_max_nodes > 0 && H->domain_grid().size() <= opt.elbo_dense_max_nodes;

  for (int k = 0; k < opt.k_max; ++k) {
    const auto t0 = clock::now();

    const std::vector<double> s_inv = sigma_inv_star(res.ig);
    res.post = update_u(H, d, prior, s_inv, opt.cg);

    std::vector<double> residuals;
    if (opt.beta_H && opt.beta_cov) {
      // projection speed mode: variance terms from the rough operator pair
      GaussianPosterior rough;
      rough.H = opt.beta_H;
      rough.prior_cov = opt.beta_cov;
      rough.s_inv = s_inv;
      rough.cg = opt.cg;
      rough.mean = grid::rescale(res.post.mean, opt.beta_H->domain_grid());
      const std::vector<double> Hu = res.post.H->apply(res.post.mean);
      residuals.resize(d.size());
      std::vector<double> e(d.size(), 0.0);
      for (std::size_t i = 0; i < d.size(); ++i) {
        e.assign(d.size(), 0.0);
        e[i] = 1.0;
        const grid::GridFunction he = rough.H->adjoint(e);
        const double var_term = rough.H->apply(rough.covariance_solve(he))[i];
        const double ri = d[i] - Hu[i];
        residuals[i] = ri * ri + var_term;
      }
    } else {
      residuals = expected_residuals_all(res.post, d);
    }
    res.ig = update_sigma(ig0, residuals);

    // convergence bookkeeping
    std::vector<double> var(res.ig.size());
    for (std::size_t i = 0; i < var.size(); ++i)
      var[i] = res.ig.beta[i] / (res.ig.alpha[i] - 1.0);

    double mean_change = 1.0, sigma_change = 1.0;
    if (!prev_mean.empty()) {
      std::vector<double> dm(res.post.mean.values);
      kernels::axpy(-1.0, prev_mean.data(), dm.data(), dm.size());
      const double denom = wnorm(w, res.post.mean.values);
      mean_change = denom > 0.0 ? wnorm(w, dm) / denom : 0.0;
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < var.size(); ++i) {
        const double dv = var[i] - prev_var[i];
        num += dv * dv;
        den += var[i] * var[i];
      }
      sigma_change = den > 0.0 ? std::sqrt(num / den) : 0.0;
    }
    prev_mean = res.post.mean.values;
    prev_var = var;

    res.trace.mean_change.push_back(mean_change);
    res.trace.sigma_change.push_back(sigma_change);
    if (record_elbo) res.trace.elbo.push_back(dense_elbo(res.post, res.ig, d, prior, ig0));
    res.trace.seconds.push_back(std::chrono::duration<double>(clock::now() - t0).count());
    res.trace.iterations = k + 1;

    if (k > 0 && std::max(mean_change, sigma_change) <= opt.tol) {
      res.trace.converged = true;
      break;
    }
  }
  return res;
}

grid::GridFunction posterior_diag_variance(const GaussianPosterior& post,
                                           std::size_t max_dense_nodes, int probes,
                                           std::uint64_t seed) {
  const grid::Grid& g = post.mean.grid;
  const std::size_t n = g.size();
  const std::vector<double> w = grid::quad_weights(g);

  // The variance field is diag(Phat^{-1}) with Phat = Om^{1/2} P Om^{-1/2},
  // the precision in the weight-orthonormal coordinates.
  std::vector<double> sw(n);
  for (std::size_t i = 0; i < n; ++i) sw[i] = std::sqrt(w[i]);

  if (n <= max_dense_nodes) {
    Mat Phat(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    grid::GridFunction e(g);
    for (std::size_t j = 0; j < n; ++j) {
      std::fill(e.values.begin(), e.values.end(), 0.0);
      e.values[j] = 1.0 / sw[j];
      const grid::GridFunction col = post.precision_apply(e);
      for (std::size_t i = 0; i < n; ++i)
        Phat(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            sw[i] * col.values[i];
    }
    Phat = 0.5 * (Phat + Phat.transpose()).eval();
    Eigen::LLT<Mat> llt(Phat);
    if (llt.info() != Eigen::Success)
      throw SolverError("posterior_diag_variance: weighted precision not SPD");
    const Mat inv = llt.solve(Mat::Identity(Phat.rows(), Phat.cols()));
    grid::GridFunction out(g);
    for (std::size_t i = 0; i < n; ++i)
      out.values[i] = inv(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
    return out;
  }

  // Deflated Hutchinson with Rademacher probes: sketch the dominant range of
  // A = Phat^{-1} with a quarter of the probe budget, take that part of the
  // diagonal exactly, and estimate only the deflated remainder
  // diag((I - QQ^T) A) stochastically. Probe budget: k solves for the sketch,
  // k for the projected diagonal, the rest for the residual.
  Rng rng(seed);
  const auto apply_A = [&](const std::vector<double>& z) {
    grid::GridFunction rhs(g);
    for (std::size_t i = 0; i < n; ++i) rhs.values[i] = z[i] / sw[i];
    const grid::GridFunction y = post.covariance_solve(rhs);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = sw[i] * y.values[i];
    return out;
  };
  const auto rademacher = [&]() {
    std::vector<double> z(n);
    for (double& v : z) v = rng.uniform() < 0.5 ? -1.0 : 1.0;
    return z;
  };

  const int k_defl = std::max(1, probes / 4);
  std::vector<std::vector<double>> Q;
  for (int p = 0; p < k_defl; ++p) {
    std::vector<double> y = apply_A(rademacher());
    for (const auto& q : Q) {
      const double c = kernels::dot(q.data(), y.data(), n);
      kernels::axpy(-c, q.data(), y.data(), n);
    }
    const double ny = std::sqrt(kernels::dot(y.data(), y.data(), n));
    if (ny > 1e-12) {
      kernels::scal(1.0 / ny, y.data(), n);
      Q.push_back(std::move(y));
    }
  }

  grid::GridFunction acc(g);
  std::vector<std::vector<double>> AQ;
  for (const auto& q : Q) {
    AQ.push_back(apply_A(q));
    for (std::size_t i = 0; i < n; ++i) acc.values[i] += q[i] * AQ.back()[i];
  }

  const int residual_probes = probes - k_defl - static_cast<int>(Q.size());
  if (residual_probes > 0) {
    grid::GridFunction racc(g);
    for (int p = 0; p < residual_probes; ++p) {
      std::vector<double> z = rademacher();
      std::vector<double> y = apply_A(z);
      // y <- (I - QQ^T) y
      for (std::size_t k = 0; k < Q.size(); ++k) {
        const double c = kernels::dot(Q[k].data(), y.data(), n);
        kernels::axpy(-c, Q[k].data(), y.data(), n);
      }
      for (std::size_t i = 0; i < n; ++i) racc.values[i] += z[i] * y[i];
    }
    for (std::size_t i = 0; i < n; ++i) acc.values[i] += racc.values[i] / residual_probes;
  }
  return acc;
}

double error_bound_trace(const GaussianPosterior& post, const std::vector<double>& s_inv,
                         const bayes::NoiseCov& true_sigma) {
  if (s_inv.size() != true_sigma.size() || s_inv.size() != post.H->data_dim())
    throw std::invalid_argument("error_bound_trace: dimension mismatch");
  double tr = 0.0;
  std::vector<double> e(s_inv.size(), 0.0);
  for (std::size_t i = 0; i < s_inv.size(); ++i) {
    if (s_inv[i] == 0.0) continue;
    e.assign(e.size(), 0.0);
    e[i] = 1.0;
    const grid::GridFunction he = post.H->adjoint(e);
    const grid::GridFunction che = post.covariance_solve(he);
    const double d_ii = s_inv[i] * s_inv[i] * true_sigma.sigma[i];
    tr += d_ii * grid::inner_l2(che, che);
  }
  return std::sqrt(tr);
}

} // namespace vinet::mfvi
