#pragma once

// Gaussian measures N(m, C) with precision-squared covariance operators:
//   SpectralCovariance: C = (c Id + delta A)^{-2}, A the Neumann Laplacian,
//     diagonal in the cosine basis (continuum spectrum pi^2(k^2+l^2) by
//     default; optionally the 5-point stencil spectrum for exact consistency
//     with StencilCovariance).
//   StencilCovariance: C = (diag(a) + delta (tx Lxx + ty Lyy))^{-2} with the
//     sparse mirror-boundary FD Laplacian; the spatially-varying-coefficient
//     operator of the learned posterior, and (with constant a, anisotropic
//     theta) the training-data random-field precision.
// White noise is normalized in the orthonormal-coefficient domain, which is
// what keeps sampling statistics consistent across resolutions.

#include <memory>
#include <vector>

#include <nlohmann/json.hpp>

#include "vinet/grid.hpp"
#include "vinet/rng.hpp"

namespace vinet::stencil {
class Factor;
}

namespace vinet::prior {

class Covariance {
 public:
  virtual ~Covariance() = default;
  virtual const grid::Grid& domain_grid() const = 0;
  virtual grid::GridFunction apply(const grid::GridFunction& f) const = 0;       // C f
  virtual grid::GridFunction inv_apply(const grid::GridFunction& f) const = 0;   // C^{-1} f
  virtual grid::GridFunction sqrt_apply(const grid::GridFunction& f) const = 0;  // C^{1/2} f
  virtual grid::GridFunction inv_sqrt_apply(const grid::GridFunction& f) const = 0;
};

enum class Spectrum {
  continuum,  // lambda_kl = pi^2 (k^2/Lx^2 + l^2/Ly^2) * ... (unit square: pi^2(k^2+l^2))
  fd          // exact eigenvalues of the 5-point mirror-boundary stencil
};

class SpectralCovariance final : public Covariance {
 public:
  // alpha_exp is fixed to 2 (fractional exponents out of scope).
  SpectralCovariance(const grid::Grid& g, double c, double delta,
                     Spectrum spectrum = Spectrum::continuum);

  const grid::Grid& domain_grid() const override { return grid_; }
  grid::GridFunction apply(const grid::GridFunction& f) const override;
  grid::GridFunction inv_apply(const grid::GridFunction& f) const override;
  grid::GridFunction sqrt_apply(const grid::GridFunction& f) const override;
  grid::GridFunction inv_sqrt_apply(const grid::GridFunction& f) const override;

  double c() const { return c_; }
  double delta() const { return delta_; }
  // eigenvalue of A at mode (k, l)
  double mode_lambda(int k, int l) const;
  // eigenvalue of C at mode (k, l): (c + delta*lambda)^{-2}
  double op_eigenvalue(int k, int l) const;
  double trace() const;

 private:
  grid::GridFunction scale_modes(const grid::GridFunction& f, int power) const;

  grid::Grid grid_;
  double c_;
  double delta_;
  Spectrum spectrum_;
};

class StencilCovariance final : public Covariance {
 public:
  // Enforces 0 < a_min <= a(x) <= a_max at construction (the measure-
  // equivalence boundedness condition); throws std::invalid_argument.
  StencilCovariance(const grid::GridFunction& a, double delta, double a_min, double a_max,
                    double theta_x = 1.0, double theta_y = 1.0);

  const grid::Grid& domain_grid() const override;
  grid::GridFunction apply(const grid::GridFunction& f) const override;
  grid::GridFunction inv_apply(const grid::GridFunction& f) const override;
  grid::GridFunction sqrt_apply(const grid::GridFunction& f) const override;
  grid::GridFunction inv_sqrt_apply(const grid::GridFunction& f) const override;

  const stencil::Factor& factor() const { return *factor_; }
  const grid::GridFunction& a() const { return a_; }
  double delta() const { return delta_; }

 private:
  grid::GridFunction a_;
  double delta_;
  std::shared_ptr<const stencil::Factor> factor_;
};

// Covariance factory from config keys {"c","delta","alpha_exp","a_min","a_max"}
// (alpha_exp must be 2; a_min/a_max only constrain the stencil variant).
std::shared_ptr<Covariance> make_covariance(const nlohmann::json& cfg, const grid::Grid& g);

// Quadrature-normalized white noise: i.i.d. standard normals on the
// orthonormal cosine coefficients.
grid::GridFunction white_noise(const grid::Grid& g, Rng& rng);

struct GaussianMeasure {
  grid::GridFunction mean;
  std::shared_ptr<const Covariance> cov;

  GaussianMeasure(grid::GridFunction m, std::shared_ptr<const Covariance> c);
  grid::GridFunction sample(Rng& rng) const;
};

} // namespace vinet::prior
