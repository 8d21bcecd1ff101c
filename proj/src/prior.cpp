#include "vinet/prior.hpp"

#include <cmath>
#include <stdexcept>

#include "vinet/stencil_ops.hpp"

namespace vinet::prior {

SpectralCovariance::SpectralCovariance(const grid::Grid& g, double c, double delta,
                                       Spectrum spectrum)
    : grid_(g), c_(c), delta_(delta), spectrum_(spectrum) {
  grid::validate(g);
  if (!(c > 0.0)) throw std::invalid_argument("SpectralCovariance: c must be > 0");
  if (delta < 0.0) throw std::invalid_argument("SpectralCovariance: delta must be >= 0");
}

double SpectralCovariance::mode_lambda(int k, int l) const {
  if (spectrum_ == Spectrum::continuum) {
    const double fx = k * M_PI / grid_.width();
    const double fy = l * M_PI / grid_.height();
    return fx * fx + fy * fy;
  }
  const double sx = std::sin(0.5 * k * M_PI / (grid_.nx - 1));
  const double sy = std::sin(0.5 * l * M_PI / (grid_.ny - 1));
  const double hx = grid_.hx(), hy = grid_.hy();
  return 4.0 * sx * sx / (hx * hx) + 4.0 * sy * sy / (hy * hy);
}

double SpectralCovariance::op_eigenvalue(int k, int l) const {
  const double m = c_ + delta_ * mode_lambda(k, l);
  return 1.0 / (m * m);
}

double SpectralCovariance::trace() const {
  double s = 0.0;
  for (int k = 0; k < grid_.nx; ++k)
    for (int l = 0; l < grid_.ny; ++l) s += op_eigenvalue(k, l);
  return s;
}

grid::GridFunction SpectralCovariance::scale_modes(const grid::GridFunction& f,
                                                   int power) const {
  if (!(f.grid == grid_)) throw std::invalid_argument("SpectralCovariance: grid mismatch");
  grid::SpectrumField s = grid::dct2(f);
  for (int k = 0; k < grid_.nx; ++k)
    for (int l = 0; l < grid_.ny; ++l) {
      const double m = c_ + delta_ * mode_lambda(k, l);
      s.coeffs[static_cast<std::size_t>(k) * grid_.ny + l] *= std::pow(m, power);
    }
  return grid::idct2(s);
}

grid::GridFunction SpectralCovariance::apply(const grid::GridFunction& f) const {
  return scale_modes(f, -2);
}
grid::GridFunction SpectralCovariance::inv_apply(const grid::GridFunction& f) const {
  return scale_modes(f, 2);
}
grid::GridFunction SpectralCovariance::sqrt_apply(const grid::GridFunction& f) const {
  return scale_modes(f, -1);
}
grid::GridFunction SpectralCovariance::inv_sqrt_apply(const grid::GridFunction& f) const {
  return scale_modes(f, 1);
}

StencilCovariance::StencilCovariance(const grid::GridFunction& a, double delta, double a_min,
                                     double a_max, double theta_x, double theta_y)
    : a_(a), delta_(delta) {
  if (!(a_min > 0.0) || !(a_max >= a_min))
    throw std::invalid_argument("StencilCovariance: need 0 < a_min <= a_max");
  for (double v : a.values)
    if (!(v >= a_min) || !(v <= a_max))
      throw std::invalid_argument(
          "StencilCovariance: coefficient leaves [a_min, a_max] (boundedness condition)");
  if (delta < 0.0) throw std::invalid_argument("StencilCovariance: delta must be >= 0");
  factor_ = std::make_shared<stencil::Factor>(a, delta, theta_x, theta_y);
}

const grid::Grid& StencilCovariance::domain_grid() const { return a_.grid; }

grid::GridFunction StencilCovariance::apply(const grid::GridFunction& f) const {
  if (!(f.grid == a_.grid)) throw std::invalid_argument("StencilCovariance: grid mismatch");
  return grid::GridFunction(a_.grid, factor_->solve(factor_->solve(f.values)));
}

grid::GridFunction StencilCovariance::inv_apply(const grid::GridFunction& f) const {
  if (!(f.grid == a_.grid)) throw std::invalid_argument("StencilCovariance: grid mismatch");
  return grid::GridFunction(a_.grid, factor_->apply(factor_->apply(f.values)));
}

grid::GridFunction StencilCovariance::sqrt_apply(const grid::GridFunction& f) const {
  if (!(f.grid == a_.grid)) throw std::invalid_argument("StencilCovariance: grid mismatch");
  return grid::GridFunction(a_.grid, factor_->solve(f.values));
}

grid::GridFunction StencilCovariance::inv_sqrt_apply(const grid::GridFunction& f) const {
  if (!(f.grid == a_.grid)) throw std::invalid_argument("StencilCovariance: grid mismatch");
  return grid::GridFunction(a_.grid, factor_->apply(f.values));
}

std::shared_ptr<Covariance> make_covariance(const nlohmann::json& cfg, const grid::Grid& g) {
  const double alpha_exp = cfg.value("alpha_exp", 2.0);
  if (alpha_exp != 2.0)
    throw std::invalid_argument("make_covariance: only alpha_exp = 2 is supported");
  const double c = cfg.value("c", 5.0);
  const double delta = cfg.value("delta", 0.2);
  if (cfg.contains("a") || cfg.contains("a_min")) {
    const double a_min = cfg.value("a_min", 0.5);
    const double a_max = cfg.value("a_max", 20.0);
    const double a_const = cfg.value("a", c);
    const grid::GridFunction a = grid::sample(g, [&](double, double) { return a_const; });
    return std::make_shared<StencilCovariance>(a, delta, a_min, a_max);
  }
  return std::make_shared<SpectralCovariance>(g, c, delta);
}

grid::GridFunction white_noise(const grid::Grid& g, Rng& rng) {
  grid::SpectrumField s(g);
  for (double& c : s.coeffs) c = rng.normal();
  return grid::idct2(s);
}

GaussianMeasure::GaussianMeasure(grid::GridFunction m, std::shared_ptr<const Covariance> c)
    : mean(std::move(m)), cov(std::move(c)) {
  if (!cov) throw std::invalid_argument("GaussianMeasure: null covariance");
  if (!(mean.grid == cov->domain_grid()))
    throw std::invalid_argument("GaussianMeasure: mean grid does not match covariance");
}

grid::GridFunction GaussianMeasure::sample(Rng& rng) const {
  grid::GridFunction w = cov->sqrt_apply(white_noise(mean.grid, rng));
  for (std::size_t i = 0; i < w.values.size(); ++i) w.values[i] += mean.values[i];
  return w;
}

} // namespace vinet::prior
