#include "vinet/kernels.hpp"

#include <atomic>
#include <stdexcept>

namespace vinet::kernels {

namespace scalar {

double dot(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

double wdot(const double* w, const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += w[i] * x[i] * y[i];
  return s;
}

double sum(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void aypx(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + a * y[i];
}

void scal(double a, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void add(const double* x, const double* y, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

void sub(const double* x, const double* y, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - y[i];
}

void mul(const double* x, const double* y, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void fmadd(const double* x, const double* y, double* acc, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) acc[i] += x[i] * y[i];
}

} // namespace scalar

namespace avx2 {
// Defined in kernels_avx2.cpp (compiled with -mavx2 -mfma).
double dot(const double*, const double*, std::size_t);
double wdot(const double*, const double*, const double*, std::size_t);
double sum(const double*, std::size_t);
void axpy(double, const double*, double*, std::size_t);
void aypx(double, const double*, double*, std::size_t);
void scal(double, double*, std::size_t);
void add(const double*, const double*, double*, std::size_t);
void sub(const double*, const double*, double*, std::size_t);
void mul(const double*, const double*, double*, std::size_t);
void fmadd(const double*, const double*, double*, std::size_t);
} // namespace avx2

Backend detected_backend() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") ? Backend::avx2 : Backend::scalar;
#else
  return Backend::scalar;
#endif
}

namespace {
std::atomic<Backend> g_backend{detected_backend()};
}

Backend active_backend() { return g_backend.load(std::memory_order_relaxed); }

void set_backend(Backend b) {
  if (b == Backend::avx2 && detected_backend() != Backend::avx2)
    throw std::runtime_error("kernels: avx2 backend not supported on this CPU");
  g_backend.store(b, std::memory_order_relaxed);
}

#define VINET_DISPATCH(fn, ...)                             \
  (active_backend() == Backend::avx2 ? avx2::fn(__VA_ARGS__) \
                                     : scalar::fn(__VA_ARGS__))

double dot(const double* x, const double* y, std::size_t n) { return VINET_DISPATCH(dot, x, y, n); }
double wdot(const double* w, const double* x, const double* y, std::size_t n) { return VINET_DISPATCH(wdot, w, x, y, n); }
double sum(const double* x, std::size_t n) { return VINET_DISPATCH(sum, x, n); }
void axpy(double a, const double* x, double* y, std::size_t n) { VINET_DISPATCH(axpy, a, x, y, n); }
void aypx(double a, const double* x, double* y, std::size_t n) { VINET_DISPATCH(aypx, a, x, y, n); }
void scal(double a, double* x, std::size_t n) { VINET_DISPATCH(scal, a, x, n); }
void add(const double* x, const double* y, double* out, std::size_t n) { VINET_DISPATCH(add, x, y, out, n); }
void sub(const double* x, const double* y, double* out, std::size_t n) { VINET_DISPATCH(sub, x, y, out, n); }
void mul(const double* x, const double* y, double* out, std::size_t n) { VINET_DISPATCH(mul, x, y, out, n); }
void fmadd(const double* x, const double* y, double* acc, std::size_t n) { VINET_DISPATCH(fmadd, x, y, acc, n); }

#undef VINET_DISPATCH

} // namespace vinet::kernels
