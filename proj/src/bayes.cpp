#include "vinet/bayes.hpp"

#include <cmath>
#include <stdexcept>

#include "vinet/forward.hpp"
#include "vinet/grid.hpp"

namespace vinet::bayes {

namespace {
// Lanczos coefficients, g = 7, 9 terms.
constexpr double kLanczos[9] = {
    0.99999999999980993,      676.5203681218851,     -1259.1392167224028,
    771.32342877765313,       -176.61502916214059,   12.507343278686905,
    -0.13857109526572012,     9.9843695780195716e-6, 1.5056327351493116e-7};
constexpr double kHalfLog2Pi = 0.91893853320467274178;  // log(2*pi)/2
} // namespace

double log_gamma(double x) {
  if (!(x > 0.0)) throw std::domain_error("log_gamma: requires x > 0");
  if (x < 0.5) {
    // reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
    return std::log(M_PI / std::sin(M_PI * x)) - log_gamma(1.0 - x);
  }
  const double z = x - 1.0;
  double a = kLanczos[0];
  for (int i = 1; i < 9; ++i) a += kLanczos[i] / (z + i);
  const double t = z + 7.5;
  return kHalfLog2Pi + (z + 0.5) * std::log(t) - t + std::log(a);
}

double digamma(double x) {
  if (!(x > 0.0)) throw std::domain_error("digamma: requires x > 0");
  double s = 0.0;
  while (x < 10.0) {
    s -= 1.0 / x;
    x += 1.0;
  }
  const double r = 1.0 / x, r2 = r * r;
  // asymptotic series, terms through x^-8
  s += std::log(x) - 0.5 * r -
       r2 * (1.0 / 12.0 - r2 * (1.0 / 120.0 - r2 * (1.0 / 252.0 - r2 / 240.0)));
  return s;
}

double trigamma(double x) {
  if (!(x > 0.0)) throw std::domain_error("trigamma: requires x > 0");
  double s = 0.0;
  while (x < 10.0) {
    s += 1.0 / (x * x);
    x += 1.0;
  }
  const double r = 1.0 / x, r2 = r * r;
  s += r * (1.0 + r * (0.5 + r * (1.0 / 6.0 - r2 * (1.0 / 30.0 - r2 * (1.0 / 42.0 - r2 / 30.0)))));
  return s;
}

IGParams::IGParams(std::vector<double> a, std::vector<double> b)
    : alpha(std::move(a)), beta(std::move(b)) {
  if (alpha.size() != beta.size()) throw std::invalid_argument("IGParams: size mismatch");
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (!(alpha[i] > 1.0)) throw std::invalid_argument("IGParams: alpha must be > 1");
    if (!(beta[i] > 0.0)) throw std::invalid_argument("IGParams: beta must be > 0");
  }
}

IGParams IGParams::constant(double a, double b, std::size_t n) {
  return IGParams(std::vector<double>(n, a), std::vector<double>(n, b));
}

NoiseCov::NoiseCov(std::vector<double> s) : sigma(std::move(s)) {
  for (double v : sigma)
    if (!(v > 0.0)) throw std::invalid_argument("NoiseCov: variances must be > 0");
}

NoiseCov NoiseCov::constant(double s, std::size_t n) {
  return NoiseCov(std::vector<double>(n, s));
}

IGStats ig_stats(const IGParams& p) {
  IGStats s;
  s.mean_inv.resize(p.size());
  s.mean_log.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    s.mean_inv[i] = p.alpha[i] / p.beta[i];
    s.mean_log[i] = std::log(p.beta[i]) - digamma(p.alpha[i]);
  }
  return s;
}

double ig_logpdf(double sigma, double alpha, double beta) {
  if (!(sigma > 0.0)) throw std::domain_error("ig_logpdf: sigma must be > 0");
  return alpha * std::log(beta) - log_gamma(alpha) - (alpha + 1.0) * std::log(sigma) -
         beta / sigma;
}

double ig_kl(double a, double b, double a0, double b0) {
  return (a - a0) * digamma(a) - log_gamma(a) + log_gamma(a0) +
         a0 * (std::log(b) - std::log(b0)) + a * (b0 - b) / b;
}

double potential_phi_residual(const std::vector<double>& residual, const NoiseCov& sigma) {
  if (residual.size() != sigma.size())
    throw std::invalid_argument("potential_phi: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < residual.size(); ++i)
    s += 0.5 * residual[i] * residual[i] / sigma.sigma[i] + 0.5 * std::log(sigma.sigma[i]);
  return s;
}

double potential_phi(const grid::GridFunction& u, const NoiseCov& sigma,
                     const std::vector<double>& d, const forward::LinearForward& H) {
  std::vector<double> r = H.apply(u);
  if (r.size() != d.size()) throw std::invalid_argument("potential_phi: data dim mismatch");
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = d[i] - r[i];
  return potential_phi_residual(r, sigma);
}

double log_posterior_ratio(const grid::GridFunction& u, const NoiseCov& sigma,
                           const std::vector<double>& d, const forward::LinearForward& H) {
  return -potential_phi(u, sigma, d, H);
}

} // namespace vinet::bayes
