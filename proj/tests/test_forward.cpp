#include <doctest.h>

#include <cmath>
#include <complex>

#include "vinet/errors.hpp"
#include "vinet/forward.hpp"
#include "vinet/grid.hpp"
#include "vinet/prior.hpp"
#include "vinet/rng.hpp"
#include "vinet/stencil_ops.hpp"

using namespace vinet;
using grid::GridFunction;

namespace {

GridFunction random_field(const grid::Grid& g, std::uint64_t seed) {
  Rng rng(seed);
  GridFunction f(g);
  for (double& v : f.values) v = rng.normal();
  return f;
}

std::vector<double> rand_data_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

double euclid(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

} // namespace

TEST_CASE("elliptic: constant source gives constant unit readings") {
  const auto H = forward::EllipticForward(0.7, grid::unit_square(17),
                                          forward::SensorSet::lattice(4));
  const GridFunction one = grid::sample(grid::unit_square(17), [](double, double) { return 1.0; });
  for (double v : H.apply(one)) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("elliptic: eigenfunction source") {
  const auto g = grid::unit_square(33);
  forward::SensorSet s;
  s.points = {{0.0, 0.5}, {0.25, 0.25}, {0.5, 0.125}, {1.0, 0.75}};
  const forward::EllipticForward H(1.0, g, s);
  const GridFunction f = grid::sample(g, [](double x, double) { return std::cos(M_PI * x); });
  const auto d = H.apply(f);
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    // sensors on grid nodes: exact reads of cos(pi x)/(1+pi^2)
    const double want = std::cos(M_PI * s.points[i][0]) / (1.0 + M_PI * M_PI);
    CHECK(d[i] == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("elliptic smoother matches dense 5-point FD Neumann solve on band-limited source") {
  const auto g = grid::unit_square(33);
  const double alpha = 1.0;
  // random source band-limited to the lower quarter of the spectrum (the two
  // discretizations of the smoother differ at O(h^2 k^2) per mode)
  Rng rng(31);
  grid::SpectrumField s(g);
  for (int k = 0; k < 8; ++k)
    for (int l = 0; l < 8; ++l)
      s.coeffs[static_cast<std::size_t>(k) * g.ny + l] = rng.normal();
  const GridFunction u = grid::idct2(s);

  const forward::EllipticForward H(alpha, g, forward::SensorSet::lattice(3));
  const GridFunction w_spec = H.smooth(u);

  // FD oracle: (I + alpha*L) w = u with the mirror-boundary stencil
  const GridFunction ones = grid::sample(g, [](double, double) { return 1.0; });
  stencil::Factor fd(ones, alpha);
  const GridFunction w_fd(g, fd.solve(u.values));

  GridFunction diff(g);
  for (std::size_t i = 0; i < diff.values.size(); ++i)
    diff.values[i] = w_spec.values[i] - w_fd.values[i];
  CHECK(grid::norm_l2(diff) / grid::norm_l2(w_fd) < 1e-3);
}

TEST_CASE("elliptic gains decay monotonically along the diagonal") {
  const auto H = forward::EllipticForward(0.5, grid::unit_square(17),
                                          forward::SensorSet::lattice(2));
  double prev = 2.0;
  for (int k = 0; k < 17; ++k) {
    const double gkk = H.gain(k, k);
    CHECK(gkk < prev);
    CHECK(gkk > 0.0);
    CHECK(gkk <= 1.0);
    prev = gkk;
  }
  CHECK(H.gain(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("elliptic adjoint identity") {
  const auto g = grid::unit_square(17);
  const forward::EllipticForward H(0.8, g, forward::SensorSet::lattice(3));

  SUBCASE("zero cotangent maps to zero") {
    const GridFunction z = H.adjoint(std::vector<double>(9, 0.0));
    for (double v : z.values) CHECK(v == 0.0);
  }

  SUBCASE("unit cotangent at a sensor, random fields") {
    for (int rep = 0; rep < 5; ++rep) {
      const GridFunction u = random_field(g, 40 + rep);
      std::vector<double> e(9, 0.0);
      e[rep % 9] = 1.0;
      const double lhs = euclid(H.apply(u), e);
      const double rhs = grid::inner_l2(u, H.adjoint(e));
      CHECK(std::fabs(lhs - rhs) <= 1e-10 * std::fabs(lhs));
    }
  }

  SUBCASE("random pairs at 1e-10 relative") {
    for (int rep = 0; rep < 20; ++rep) {
      const GridFunction u = random_field(g, 50 + rep);
      const auto v = rand_data_vec(9, 80 + rep);
      const auto Hu = H.apply(u);
      const double lhs = euclid(Hu, v);
      const double rhs = grid::inner_l2(u, H.adjoint(v));
      const double scale = std::sqrt(euclid(Hu, Hu)) * std::sqrt(euclid(v, v));
      CHECK(std::fabs(lhs - rhs) <= 1e-10 * scale);
    }
  }
}

TEST_CASE("helmholtz solve: zero source, determinism, residual contract") {
  const auto g = grid::unit_square(17);
  forward::PmlConfig pml;
  const GridFunction zero(g);
  const auto sol = forward::helmholtz_solve(zero, 4.0, pml);
  for (const auto& v : sol.field) {
    CHECK(v.real() == 0.0);
    CHECK(v.imag() == 0.0);
  }
  CHECK(sol.solver_grid.nx > g.nx);
}

TEST_CASE("helmholtz apply: linearity and data layout") {
  const auto g = grid::unit_square(17);
  const forward::HelmholtzForward H(g, {2.0, 4.0}, forward::PmlConfig{},
                                    forward::SensorSet::boundary(8));
  CHECK(H.data_dim() == 2 * 8 * 2);

  const GridFunction u = random_field(g, 7);
  GridFunction u2 = u;
  for (double& v : u2.values) v *= 2.0;
  const auto d1 = H.apply(u);
  const auto d2 = H.apply(u2);
  for (std::size_t i = 0; i < d1.size(); ++i)
    CHECK(d2[i] == doctest::Approx(2.0 * d1[i]).epsilon(1e-12));

  const GridFunction z(g);
  for (double v : H.apply(z)) CHECK(v == 0.0);
}

TEST_CASE("helmholtz adjoint identity and PSD normal operator") {
  const auto g = grid::unit_square(17);
  const forward::HelmholtzForward H(g, {3.0}, forward::PmlConfig{},
                                    forward::SensorSet::boundary(6));

  for (int rep = 0; rep < 5; ++rep) {
    const GridFunction u = random_field(g, 60 + rep);
    const auto v = rand_data_vec(H.data_dim(), 90 + rep);
    const auto Hu = H.apply(u);
    const double lhs = euclid(Hu, v);
    const double rhs = grid::inner_l2(u, H.adjoint(v));
    const double scale = std::sqrt(euclid(Hu, Hu)) * std::sqrt(euclid(v, v));
    CHECK(std::fabs(lhs - rhs) <= 1e-8 * scale);
  }

  for (int rep = 0; rep < 5; ++rep) {
    const GridFunction u = random_field(g, 70 + rep);
    const auto Hu = H.apply(u);
    const GridFunction hh = H.adjoint(Hu);
    const double rq = grid::inner_l2(u, hh) / grid::inner_l2(u, u);
    CHECK(rq >= -1e-10);
  }
}

TEST_CASE("helmholtz rejects under-resolved wavenumbers") {
  CHECK_THROWS_AS(forward::HelmholtzForward(grid::unit_square(9), {40.0},
                                            forward::PmlConfig{},
                                            forward::SensorSet::boundary(4)),
                  std::invalid_argument);
}

TEST_CASE("sensor validation rejects outside points") {
  forward::SensorSet s;
  s.points = {{1.5, 0.5}};
  CHECK_THROWS_AS(forward::EllipticForward(1.0, grid::unit_square(9), s),
                  std::invalid_argument);
}
