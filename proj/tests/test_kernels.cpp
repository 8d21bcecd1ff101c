#include <doctest.h>

#include <cmath>
#include <vector>

#include "vinet/kernels.hpp"
#include "vinet/rng.hpp"

using namespace vinet;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

struct BackendGuard {
  kernels::Backend saved;
  BackendGuard() : saved(kernels::active_backend()) {}
  ~BackendGuard() { kernels::set_backend(saved); }
};

} // namespace

TEST_CASE("scalar and simd backends agree on every kernel") {
  if (kernels::detected_backend() != kernels::Backend::avx2) {
    MESSAGE("no AVX2 on this machine; dispatch test reduced to scalar only");
    return;
  }
  BackendGuard guard;
  Rng rng(123);
  for (std::size_t n : {1u, 3u, 4u, 7u, 8u, 64u, 1001u}) {
    const auto x = random_vec(n, rng);
    const auto y = random_vec(n, rng);
    const auto w = random_vec(n, rng);

    kernels::set_backend(kernels::Backend::scalar);
    const double dot_s = kernels::dot(x.data(), y.data(), n);
    const double wdot_s = kernels::wdot(w.data(), x.data(), y.data(), n);
    const double sum_s = kernels::sum(x.data(), n);
    std::vector<double> ax_s = y;
    kernels::axpy(0.37, x.data(), ax_s.data(), n);
    std::vector<double> ay_s = y;
    kernels::aypx(-1.21, x.data(), ay_s.data(), n);
    std::vector<double> mul_s(n), add_s(n), sub_s(n), fma_s = y;
    kernels::mul(x.data(), y.data(), mul_s.data(), n);
    kernels::add(x.data(), y.data(), add_s.data(), n);
    kernels::sub(x.data(), y.data(), sub_s.data(), n);
    kernels::fmadd(x.data(), w.data(), fma_s.data(), n);

    kernels::set_backend(kernels::Backend::avx2);
    const double tol = 1e-13 * (1.0 + static_cast<double>(n));
    CHECK(kernels::dot(x.data(), y.data(), n) == doctest::Approx(dot_s).epsilon(tol));
    CHECK(kernels::wdot(w.data(), x.data(), y.data(), n) ==
          doctest::Approx(wdot_s).epsilon(tol));
    CHECK(kernels::sum(x.data(), n) == doctest::Approx(sum_s).epsilon(tol));
    std::vector<double> ax_v = y;
    kernels::axpy(0.37, x.data(), ax_v.data(), n);
    std::vector<double> ay_v = y;
    kernels::aypx(-1.21, x.data(), ay_v.data(), n);
    std::vector<double> mul_v(n), add_v(n), sub_v(n), fma_v = y;
    kernels::mul(x.data(), y.data(), mul_v.data(), n);
    kernels::add(x.data(), y.data(), add_v.data(), n);
    kernels::sub(x.data(), y.data(), sub_v.data(), n);
    kernels::fmadd(x.data(), w.data(), fma_v.data(), n);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(ax_v[i] == doctest::Approx(ax_s[i]).epsilon(1e-14));
      CHECK(ay_v[i] == doctest::Approx(ay_s[i]).epsilon(1e-14));
      CHECK(mul_v[i] == mul_s[i]);
      CHECK(add_v[i] == add_s[i]);
      CHECK(sub_v[i] == sub_s[i]);
      CHECK(fma_v[i] == doctest::Approx(fma_s[i]).epsilon(1e-14));
    }
  }
}

TEST_CASE("kernel reference values") {
  const std::vector<double> x{1.0, 2.0, 3.0};
  const std::vector<double> y{4.0, -5.0, 6.0};
  CHECK(kernels::dot(x.data(), y.data(), 3) == doctest::Approx(12.0));
  CHECK(kernels::sum(x.data(), 3) == doctest::Approx(6.0));
  std::vector<double> z = y;
  kernels::axpy(2.0, x.data(), z.data(), 3);
  CHECK(z[0] == doctest::Approx(6.0));
  CHECK(z[1] == doctest::Approx(-1.0));
  CHECK(z[2] == doctest::Approx(12.0));
}

TEST_CASE("rng determinism and seed splitting") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
  CHECK(child_seed(1, 0) != child_seed(1, 1));
  CHECK(child_seed(1, 0) == child_seed(1, 0));
}

TEST_CASE("rng gamma sampler matches moments") {
  Rng rng(7);
  const double k = 3.0;
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double g = rng.gamma(k);
    s += g;
    s2 += g * g;
  }
  const double mean = s / n;
  const double var = s2 / n - mean * mean;
  CHECK(mean == doctest::Approx(k).epsilon(0.02));
  CHECK(var == doctest::Approx(k).epsilon(0.05));
}
