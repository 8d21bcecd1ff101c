#include "vinet/net/elbo.hpp"

#include <cmath>

#include "vinet/kernels.hpp"

namespace vinet::net {

ElboContext::ElboContext(const grid::Grid& g,
                         std::shared_ptr<const forward::LinearForward> H_, double eps0_inv_,
                         double delta_, bayes::IGParams ig0_)
    : inv_grid(g), H(std::move(H_)), eps0_inv(eps0_inv_), delta(delta_), ig0(std::move(ig0_)) {
  const grid::GridFunction c0 = grid::sample(g, [&](double, double) { return eps0_inv; });
  M0 = std::make_shared<stencil::Factor>(c0, delta);
  quad_w = grid::quad_weights(g);
  logdet_M0 = M0->logdet();
}

Value apply_forward(Tape& t, Value u_flat, const ElboContext& ctx) {
  const Tensor& vu = t.value(u_flat);
  if (vu.numel() != ctx.inv_grid.size())
    throw std::invalid_argument("apply_forward: grid size mismatch");
  const grid::GridFunction u(ctx.inv_grid, vu.data);
  std::vector<double> d = ctx.H->apply(u);
  const int nd = static_cast<int>(d.size());
  Tensor out({nd}, std::move(d));
  const auto* ctxp = &ctx;
  return t.make_node(std::move(out), {u_flat}, [u_flat, ctxp](Tape& tp, const Tensor& g) {
    const grid::GridFunction hg =
        ctxp->H->adjoint(std::vector<double>(g.data.begin(), g.data.end()));
    Tensor gx(tp.value(u_flat).shape);
    for (std::size_t i = 0; i < gx.numel(); ++i)
      gx[i] = ctxp->quad_w[i] * hg.values[i];  // Euclidean transpose = Om H*
    tp.accumulate(u_flat, gx);
  });
}

Value stencil_solve(Tape& t, Value a, Value rhs, double delta,
                    std::shared_ptr<const stencil::Factor>& factor_out,
                    const grid::Grid& g) {
  const Tensor& va = t.value(a);
  const Tensor& vr = t.value(rhs);
  if (va.numel() != g.size() || vr.numel() != g.size())
    throw std::invalid_argument("stencil_solve: size mismatch");
  const grid::GridFunction a_field(g, va.data);
  auto factor = std::make_shared<const stencil::Factor>(a_field, delta);
  factor_out = factor;
  std::vector<double> y = factor->solve(vr.data);
  auto yp = std::make_shared<std::vector<double>>(y);
  Tensor out(vr.shape, std::move(y));
  return t.make_node(std::move(out), {a, rhs}, [a, rhs, factor, yp](Tape& tp, const Tensor& g) {
    // y = M^{-1} r:  r_bar += M^{-T} g,  a_bar_i -= (M^{-T} g)_i y_i
    const std::vector<double> mtg =
        factor->solve_transpose(std::vector<double>(g.data.begin(), g.data.end()));
    Tensor gr(tp.value(rhs).shape, mtg);
    tp.accumulate(rhs, gr);
    Tensor ga(tp.value(a).shape);
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] = -mtg[i] * (*yp)[i];
    tp.accumulate(a, ga);
  });
}

Value logdet_precision(Tape& t, Value a, std::shared_ptr<const stencil::Factor> factor) {
  Tensor out = Tensor::scalar(2.0 * factor->logdet());
  return t.make_node(std::move(out), {a}, [a, factor](Tape& tp, const Tensor& g) {
    const std::vector<double> diag = factor->diag_inverse();
    Tensor ga(tp.value(a).shape);
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] = 2.0 * g[0] * diag[i];
    tp.accumulate(a, ga);
  });
}

namespace {

// y = M0 x (fixed sparse operator), Euclidean backward via M0^T.
Value apply_M0(Tape& t, Value x, const ElboContext& ctx) {
  const Tensor& vx = t.value(x);
  std::vector<double> y = ctx.M0->apply(vx.data);
  Tensor out(vx.shape, std::move(y));
  const auto* ctxp = &ctx;
  return t.make_node(std::move(out), {x}, [x, ctxp](Tape& tp, const Tensor& g) {
    const Eigen::Map<const Eigen::VectorXd> gv(g.data.data(),
                                               static_cast<Eigen::Index>(g.numel()));
    const Eigen::VectorXd gx = ctxp->M0->nodal_matrix().transpose() * gv;
    tp.accumulate(x, Tensor(tp.value(x).shape,
                            std::vector<double>(gx.data(), gx.data() + gx.size())));
  });
}

// -KL(IG(alpha,beta) || IG(alpha0,beta0)) summed over sensors, on the tape.
Value ig_neg_kl(Tape& t, Value alpha, Value beta, const bayes::IGParams& ig0) {
  const std::size_t nd = t.value(alpha).numel();
  Tensor a0t({static_cast<int>(nd)}, ig0.alpha);
  Tensor b0t({static_cast<int>(nd)}, ig0.beta);
  std::vector<double> lg0(nd), lb0(nd);
  for (std::size_t i = 0; i < nd; ++i) {
    lg0[i] = bayes::log_gamma(ig0.alpha[i]);
    lb0[i] = std::log(ig0.beta[i]);
  }
  Value a0 = t.constant(a0t);
  Value b0 = t.constant(b0t);
  Value lgamma_a0 = t.constant(Tensor({static_cast<int>(nd)}, lg0));
  Value log_b0 = t.constant(Tensor({static_cast<int>(nd)}, lb0));

  // (a - a0) psi(a) - lgamma(a) + lgamma(a0) + a0 (log b - log b0) + a (b0 - b)/b
  Value term1 = nn::mul(t, nn::sub(t, alpha, a0), nn::digamma_v(t, alpha));
  Value term2 = nn::sub(t, lgamma_a0, nn::log_gamma_v(t, alpha));
  Value term3 = nn::mul(t, a0, nn::sub(t, nn::log_v(t, beta), log_b0));
  Value term4 = nn::mul(t, alpha, nn::div(t, nn::sub(t, b0, beta), beta));
  Value kl = nn::sum(t, nn::add(t, nn::add(t, term1, term2), nn::add(t, term3, term4)));
  return nn::neg(t, kl);
}

// -1/2 sum_i (log beta - psi(alpha)) - 1/2 r^T diag(alpha/beta) r
Value i3_term(Tape& t, Value alpha, Value beta, Value residual) {
  Value elog = nn::sum(t, nn::sub(t, nn::log_v(t, beta), nn::digamma_v(t, alpha)));
  Value sinv = nn::div(t, alpha, beta);
  Value quad = nn::dot(t, nn::square(t, residual), sinv);
  return nn::scale(t, nn::add(t, elog, quad), -0.5);
}

} // namespace

Value elbo_loss(Tape& t, Value mean, Value a, Value alpha, Value beta,
                const std::vector<double>& d, const grid::GridFunction& u0,
                const grid::GridFunction& eta_white, const ElboContext& ctx,
                ElboBreakdown* breakdown) {
  const grid::Grid& g = ctx.inv_grid;
  if (!(u0.grid == g) || !(eta_white.grid == g))
    throw std::invalid_argument("elbo_loss: grid mismatch");

  // u~ = u_p + M_p^{-1} W
  Value W = t.constant(Tensor({static_cast<int>(g.size())}, eta_white.values));
  std::shared_ptr<const stencil::Factor> Mp;
  Value dev = stencil_solve(t, a, W, ctx.delta, Mp, g);
  Value u_tilde = nn::add(t, mean, dev);

  // I1 = [logdet M0 - logdet M_p] + 1/2 ||W||^2_Om - 1/2 ||M0 (u~ - u0)||^2_Om
  const double w_norm_sq = kernels::wdot(ctx.quad_w.data(), eta_white.values.data(),
                                         eta_white.values.data(), eta_white.values.size());
  Value ld_p = logdet_precision(t, a, Mp);  // = logdet P_p = 2 logdet M_p
  Value u0v = t.constant(Tensor({static_cast<int>(g.size())}, u0.values));
  Value m0_dev = apply_M0(t, nn::sub(t, u_tilde, u0v), ctx);
  Value quad0 = nn::weighted_dot(t, m0_dev, m0_dev, ctx.quad_w);
  Value i1 = nn::add_scalar(
      t, nn::sub(t, nn::scale(t, ld_p, -0.5), nn::scale(t, quad0, 0.5)),
      ctx.logdet_M0 + 0.5 * w_norm_sq);

  // I2
  Value i2 = ig_neg_kl(t, alpha, beta, ctx.ig0);

  // I3 with residual d - H u~
  Value Hu = apply_forward(t, u_tilde, ctx);
  Value dval = t.constant(Tensor({static_cast<int>(d.size())}, d));
  Value i3 = i3_term(t, alpha, beta, nn::sub(t, dval, Hu));

  Value L = nn::add(t, i1, nn::add(t, i2, i3));
  Value loss = nn::neg(t, L);
  if (breakdown) {
    breakdown->i1 = t.value(i1)[0];
    breakdown->i2 = t.value(i2)[0];
    breakdown->i3 = t.value(i3)[0];
    breakdown->loss = t.value(loss)[0];
  }
  return loss;
}

Value stage1_loss(Tape& t, Value d_hat_img, Value alpha, Value beta,
                  const std::vector<double>& d_noisy, const std::vector<double>& d_clean,
                  const ElboContext& ctx) {
  const Tensor& vh = t.value(d_hat_img);
  Value d_hat = nn::reshape(t, d_hat_img, {static_cast<int>(vh.numel())});
  Value clean = t.constant(Tensor({static_cast<int>(d_clean.size())}, d_clean));
  Value noisy = t.constant(Tensor({static_cast<int>(d_noisy.size())}, d_noisy));

  Value fit = nn::mse(t, d_hat, clean);
  Value i2 = ig_neg_kl(t, alpha, beta, ctx.ig0);
  Value i3 = i3_term(t, alpha, beta, nn::sub(t, noisy, d_hat));
  return nn::sub(t, fit, nn::add(t, i2, i3));
}

} // namespace vinet::net
