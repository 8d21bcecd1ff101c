#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <memory>

#include "vinet/bayes.hpp"
#include "vinet/forward.hpp"
#include "vinet/grid.hpp"
#include "vinet/mfvi.hpp"
#include "vinet/prior.hpp"
#include "vinet/rng.hpp"

using namespace vinet;
using grid::GridFunction;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Instance {
  std::shared_ptr<forward::EllipticForward> H;
  prior::GaussianMeasure prior;
  std::vector<double> d;
  bayes::IGParams ig0;
};

Instance make_instance(int n, int sensors_per_axis, std::uint64_t seed) {
  const auto g = grid::unit_square(n);
  auto H = std::make_shared<forward::EllipticForward>(
      1.0, g, forward::SensorSet::lattice(sensors_per_axis));
  auto cov = std::make_shared<prior::SpectralCovariance>(g, 2.0, 0.1);
  GridFunction mean = grid::sample(g, [](double x, double y) { return 1.0 + 0.3 * x - 0.2 * y; });
  prior::GaussianMeasure pr(mean, cov);

  Rng rng(seed);
  GridFunction truth = pr.sample(rng);
  std::vector<double> d = H->apply(truth);
  for (double& v : d) v += 0.05 * rng.normal();
  const std::size_t nd = d.size();
  return Instance{H, std::move(pr), std::move(d),
                  bayes::IGParams::constant(2.0, 0.02, nd)};
}

// Independent dense oracle in the weight-orthonormal coordinates.
struct DenseOracle {
  MatrixXd Hhat, P0hat;
  VectorXd sqrt_w;
  const grid::Grid g;

  DenseOracle(const forward::LinearForward& H, const prior::Covariance& cov)
      : g(H.domain_grid()) {
    const auto w = grid::quad_weights(g);
    const auto n = static_cast<Eigen::Index>(g.size());
    sqrt_w.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) sqrt_w[i] = std::sqrt(w[i]);
    Hhat.resize(static_cast<Eigen::Index>(H.data_dim()), n);
    P0hat.resize(n, n);
    GridFunction e(g);
    for (Eigen::Index j = 0; j < n; ++j) {
      std::fill(e.values.begin(), e.values.end(), 0.0);
      e.values[j] = 1.0 / sqrt_w[j];
      const auto col = H.apply(e);
      for (std::size_t i = 0; i < col.size(); ++i) Hhat(static_cast<Eigen::Index>(i), j) = col[i];
      const auto pc = cov.inv_apply(e);
      for (Eigen::Index i = 0; i < n; ++i) P0hat(i, j) = sqrt_w[i] * pc.values[i];
    }
    P0hat = 0.5 * (P0hat + P0hat.transpose()).eval();
  }

  VectorXd hat(const std::vector<double>& nodal) const {
    VectorXd v(sqrt_w.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = sqrt_w[i] * nodal[i];
    return v;
  }
  std::vector<double> unhat(const VectorXd& v) const {
    std::vector<double> out(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = v[i] / sqrt_w[i];
    return out;
  }
};

double rel_l2(const GridFunction& a, const GridFunction& b) {
  GridFunction diff(a.grid);
  for (std::size_t i = 0; i < diff.values.size(); ++i)
    diff.values[i] = a.values[i] - b.values[i];
  return grid::norm_l2(diff) / std::max(grid::norm_l2(b), 1e-300);
}

} // namespace

TEST_CASE("sigma_inv_star matches ig_stats and reference values") {
  const bayes::IGParams p({2.0, 3.0}, {4.0, 1.0});
  const auto s = mfvi::sigma_inv_star(p);
  CHECK(s[0] == doctest::Approx(0.5));
  CHECK(s[1] == doctest::Approx(3.0));
  const auto st = bayes::ig_stats(p);
  CHECK(s == st.mean_inv);

  const auto pc = bayes::IGParams::constant(2.0, 4.0, 5);
  for (double v : mfvi::sigma_inv_star(pc)) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("update_u with zero information returns the prior") {
  auto inst = make_instance(9, 2, 1);
  const std::vector<double> zeros(inst.d.size(), 0.0);
  const auto post = mfvi::update_u(inst.H, inst.d, inst.prior, zeros);
  CHECK(rel_l2(post.mean, inst.prior.mean) < 1e-12);

  // precision actions agree with the prior precision on probes
  Rng rng(2);
  for (int rep = 0; rep < 3; ++rep) {
    GridFunction f(post.mean.grid);
    for (double& v : f.values) v = rng.normal();
    const auto a = post.precision_apply(f);
    const auto b = inst.prior.cov->inv_apply(f);
    for (std::size_t i = 0; i < a.values.size(); ++i)
      CHECK(a.values[i] == doctest::Approx(b.values[i]).epsilon(1e-12));
  }
}

TEST_CASE("update_u matches the dense conjugate solve on 9x9 with 4 sensors") {
  auto inst = make_instance(9, 2, 3);
  const auto s_inv = mfvi::sigma_inv_star(inst.ig0);
  const auto post = mfvi::update_u(inst.H, inst.d, inst.prior, s_inv, {1e-12, 20000});

  DenseOracle M(*inst.H, *inst.prior.cov);
  VectorXd sv(static_cast<Eigen::Index>(s_inv.size()));
  for (Eigen::Index i = 0; i < sv.size(); ++i) sv[i] = s_inv[static_cast<std::size_t>(i)];
  const MatrixXd Phat = M.P0hat + M.Hhat.transpose() * sv.asDiagonal() * M.Hhat;
  VectorXd dv(sv.size());
  for (Eigen::Index i = 0; i < dv.size(); ++i) dv[i] = inst.d[static_cast<std::size_t>(i)];
  const VectorXd rhs = M.Hhat.transpose() * (sv.asDiagonal() * dv) + M.P0hat * M.hat(inst.prior.mean.values);
  const VectorXd mean_hat = Phat.ldlt().solve(rhs);
  const GridFunction oracle(post.mean.grid, M.unhat(mean_hat));
  CHECK(rel_l2(post.mean, oracle) < 1e-8);
}

TEST_CASE("expected_residual: vanishing covariance leaves the squared residual") {
  const auto g = grid::unit_square(9);
  auto H = std::make_shared<forward::EllipticForward>(1.0, g, forward::SensorSet::lattice(2));
  auto cov = std::make_shared<prior::SpectralCovariance>(g, 1e8, 0.0);
  prior::GaussianMeasure pr(grid::sample(g, [](double, double) { return 1.0; }), cov);
  std::vector<double> d(H->data_dim(), 5.0);
  const auto post = mfvi::update_u(H, d, pr, std::vector<double>(d.size(), 1.0));
  const auto Hu = H->apply(post.mean);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double r2 = (d[i] - Hu[i]) * (d[i] - Hu[i]);
    const double er = mfvi::expected_residual(i, post, d);
    CHECK(er >= r2);
    CHECK(er - r2 < 1e-6 * r2);
  }
}

TEST_CASE("expected_residual matches the dense oracle on 9x9") {
  auto inst = make_instance(9, 2, 4);
  const auto s_inv = mfvi::sigma_inv_star(inst.ig0);
  const auto post = mfvi::update_u(inst.H, inst.d, inst.prior, s_inv, {1e-12, 20000});

  DenseOracle M(*inst.H, *inst.prior.cov);
  VectorXd sv(static_cast<Eigen::Index>(s_inv.size()));
  for (Eigen::Index i = 0; i < sv.size(); ++i) sv[i] = s_inv[static_cast<std::size_t>(i)];
  const MatrixXd Phat = M.P0hat + M.Hhat.transpose() * sv.asDiagonal() * M.Hhat;
  const MatrixXd Cp = Phat.ldlt().solve(MatrixXd::Identity(Phat.rows(), Phat.cols()));
  const MatrixXd HCpHt = M.Hhat * Cp * M.Hhat.transpose();
  const auto Hu = inst.H->apply(post.mean);
  for (std::size_t i = 0; i < inst.d.size(); ++i) {
    const double want =
        (inst.d[i] - Hu[i]) * (inst.d[i] - Hu[i]) + HCpHt(static_cast<Eigen::Index>(i),
                                                          static_cast<Eigen::Index>(i));
    CHECK(mfvi::expected_residual(i, post, inst.d) == doctest::Approx(want).epsilon(1e-8));
  }
}

TEST_CASE("expected_residual is sensor-order equivariant") {
  auto inst = make_instance(9, 2, 5);
  // permuted sensor set
  auto sensors = inst.H->sensors();
  std::swap(sensors.points[0], sensors.points[3]);
  std::swap(sensors.points[1], sensors.points[2]);
  auto Hp = std::make_shared<forward::EllipticForward>(1.0, grid::unit_square(9), sensors);
  std::vector<double> dp = {inst.d[3], inst.d[2], inst.d[1], inst.d[0]};
  std::vector<double> s_inv = mfvi::sigma_inv_star(inst.ig0);
  std::vector<double> s_inv_p = {s_inv[3], s_inv[2], s_inv[1], s_inv[0]};

  const auto post = mfvi::update_u(inst.H, inst.d, inst.prior, s_inv, {1e-11, 20000});
  const auto post_p = mfvi::update_u(Hp, dp, inst.prior, s_inv_p, {1e-11, 20000});
  const int perm[4] = {3, 2, 1, 0};
  for (int i = 0; i < 4; ++i) {
    const double a = mfvi::expected_residual(i, post_p, dp);
    const double b = mfvi::expected_residual(perm[i], post, inst.d);
    CHECK(a == doctest::Approx(b).epsilon(1e-7));
  }
}

TEST_CASE("update_sigma closed form") {
  const auto ig0 = bayes::IGParams::constant(2.0, 1.0, 2);
  const auto ig = mfvi::update_sigma(ig0, {2.0, 4.0});
  CHECK(ig.alpha[0] == 2.5);  // alpha0 + 1/2, exact
  CHECK(ig.alpha[1] == 2.5);
  CHECK(ig.beta[0] == doctest::Approx(2.0));
  CHECK(ig.beta[1] == doctest::Approx(3.0));

  const auto ig_z = mfvi::update_sigma(ig0, {0.0, 0.0});
  CHECK(ig_z.beta[0] == doctest::Approx(ig0.beta[0]));
  CHECK_THROWS_AS(mfvi::update_sigma(ig0, {-1.0, 0.0}), std::domain_error);
}

TEST_CASE("run_mfvi: pinned sigma converges immediately to the single update") {
  auto inst = make_instance(9, 2, 6);
  // huge beta0: noise estimate pinned at the prior, s_inv ~ 0
  const auto ig0 = bayes::IGParams::constant(2.0, 1e9, inst.d.size());
  mfvi::MfviOptions opt;
  opt.tol = 1e-6;
  const auto res = mfvi::run_mfvi(inst.H, inst.d, inst.prior, ig0, opt);
  CHECK(res.trace.converged);
  CHECK(res.trace.iterations <= 2);
  const auto single =
      mfvi::update_u(inst.H, inst.d, inst.prior, mfvi::sigma_inv_star(res.ig), res.post.cg);
  CHECK(rel_l2(res.post.mean, single.mean) < 1e-8);
}

TEST_CASE("run_mfvi reaches a simultaneous fixed point on 9x9") {
  auto inst = make_instance(9, 2, 7);
  mfvi::MfviOptions opt;
  opt.tol = 1e-8;
  opt.k_max = 200;
  opt.cg = {1e-12, 20000};
  const auto res = mfvi::run_mfvi(inst.H, inst.d, inst.prior, inst.ig0, opt);
  CHECK(res.trace.converged);

  // both closed-form updates reproduce the fixed point
  const auto post2 =
      mfvi::update_u(inst.H, inst.d, inst.prior, mfvi::sigma_inv_star(res.ig), res.post.cg);
  CHECK(rel_l2(post2.mean, res.post.mean) < 1e-6);
  std::vector<double> resid(inst.d.size());
  for (std::size_t i = 0; i < inst.d.size(); ++i)
    resid[i] = mfvi::expected_residual(i, post2, inst.d);
  const auto ig2 = mfvi::update_sigma(inst.ig0, resid);
  for (std::size_t i = 0; i < ig2.size(); ++i) {
    CHECK(ig2.alpha[i] == res.ig.alpha[i]);
    CHECK(ig2.beta[i] == doctest::Approx(res.ig.beta[i]).epsilon(1e-6));
  }

  // alpha stays alpha0 + 1/2 for every iteration after the first
  for (double a : res.ig.alpha) CHECK(a == 2.5);
}

TEST_CASE("run_mfvi dense ELBO trace is non-decreasing") {
  auto inst = make_instance(9, 2, 8);
  mfvi::MfviOptions opt;
  opt.tol = 1e-8;
  opt.k_max = 40;
  opt.cg = {1e-12, 20000};
  opt.elbo_dense_max_nodes = 200;
  const auto res = mfvi::run_mfvi(inst.H, inst.d, inst.prior, inst.ig0, opt);
  REQUIRE(res.trace.elbo.size() >= 2);
  for (std::size_t k = 1; k < res.trace.elbo.size(); ++k)
    CHECK(res.trace.elbo[k] >= res.trace.elbo[k - 1] - 1e-10);
}

TEST_CASE("projection speed mode stays close to the exact beta update") {
  auto inst = make_instance(17, 3, 12);
  mfvi::MfviOptions exact;
  exact.tol = 1e-5;
  exact.k_max = 30;
  const auto res_exact = mfvi::run_mfvi(inst.H, inst.d, inst.prior, inst.ig0, exact);

  mfvi::MfviOptions rough = exact;
  const auto cg = grid::unit_square(9);
  rough.beta_H = std::make_shared<forward::EllipticForward>(1.0, cg,
                                                            inst.H->sensors());
  rough.beta_cov = std::make_shared<prior::SpectralCovariance>(cg, 2.0, 0.1);
  const auto res_rough = mfvi::run_mfvi(inst.H, inst.d, inst.prior, inst.ig0, rough);

  CHECK(rel_l2(res_rough.post.mean, res_exact.post.mean) < 0.05);
}

TEST_CASE("posterior_diag_variance: scalar precision and dense oracle") {
  const auto g = grid::unit_square(9);
  auto H = std::make_shared<forward::EllipticForward>(1.0, g, forward::SensorSet::lattice(2));
  auto cov = std::make_shared<prior::SpectralCovariance>(g, std::sqrt(2.0), 0.0);  // P = 2 Id
  prior::GaussianMeasure pr(GridFunction(g), cov);
  const auto post = mfvi::update_u(H, std::vector<double>(4, 0.0), pr,
                                   std::vector<double>(4, 0.0));
  const auto var = mfvi::posterior_diag_variance(post);
  for (double v : var.values) CHECK(v == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("posterior_diag_variance dense vs explicit inverse and Hutchinson") {
  auto inst = make_instance(9, 2, 9);
  const auto s_inv = mfvi::sigma_inv_star(inst.ig0);
  const auto post = mfvi::update_u(inst.H, inst.d, inst.prior, s_inv, {1e-12, 20000});

  DenseOracle M(*inst.H, *inst.prior.cov);
  VectorXd sv(4);
  for (int i = 0; i < 4; ++i) sv[i] = s_inv[i];
  const MatrixXd Phat = M.P0hat + M.Hhat.transpose() * sv.asDiagonal() * M.Hhat;
  const MatrixXd Cp = Phat.ldlt().solve(MatrixXd::Identity(Phat.rows(), Phat.cols()));

  const auto var = mfvi::posterior_diag_variance(post);
  for (std::size_t i = 0; i < var.values.size(); ++i)
    CHECK(var.values[i] == doctest::Approx(Cp(static_cast<Eigen::Index>(i),
                                              static_cast<Eigen::Index>(i)))
                               .epsilon(1e-10));

  // Hutchinson on 17x17 against dense: elementwise relative error, median < 10%
  auto inst17 = make_instance(17, 3, 10);
  const auto s17 = mfvi::sigma_inv_star(inst17.ig0);
  const auto post17 = mfvi::update_u(inst17.H, inst17.d, inst17.prior, s17);
  const auto dense17 = mfvi::posterior_diag_variance(post17, 400);
  const auto hutch17 = mfvi::posterior_diag_variance(post17, 0, 200, 4242);
  std::vector<double> rel;
  for (std::size_t i = 0; i < dense17.values.size(); ++i)
    rel.push_back(std::fabs(hutch17.values[i] - dense17.values[i]) /
                  std::fabs(dense17.values[i]));
  std::sort(rel.begin(), rel.end());
  CHECK(rel[rel.size() / 2] < 0.10);
}

TEST_CASE("error_bound_trace: zero information, homogeneity, dense oracle") {
  auto inst = make_instance(9, 2, 11);
  const auto s_inv = mfvi::sigma_inv_star(inst.ig0);
  const auto post = mfvi::update_u(inst.H, inst.d, inst.prior, s_inv, {1e-12, 20000});

  CHECK(mfvi::error_bound_trace(post, std::vector<double>(4, 0.0),
                                bayes::NoiseCov::constant(1.0, 4)) == 0.0);

  const double t1 = mfvi::error_bound_trace(post, s_inv, bayes::NoiseCov::constant(0.3, 4));
  const double t4 = mfvi::error_bound_trace(post, s_inv, bayes::NoiseCov::constant(1.2, 4));
  CHECK(t4 == doctest::Approx(2.0 * t1).epsilon(1e-10));

  DenseOracle M(*inst.H, *inst.prior.cov);
  VectorXd sv(4);
  for (int i = 0; i < 4; ++i) sv[i] = s_inv[i];
  const MatrixXd Phat = M.P0hat + M.Hhat.transpose() * sv.asDiagonal() * M.Hhat;
  const MatrixXd Cp = Phat.ldlt().solve(MatrixXd::Identity(Phat.rows(), Phat.cols()));
  const MatrixXd B = Cp * M.Hhat.transpose() * sv.asDiagonal() *
                     (0.3 * MatrixXd::Identity(4, 4)) * sv.asDiagonal() * M.Hhat * Cp;
  CHECK(t1 == doctest::Approx(std::sqrt(B.trace())).epsilon(1e-8));
}
