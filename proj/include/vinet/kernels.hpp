#pragma once

// Double-precision inner-loop kernels with runtime-dispatched SIMD variants.
// Scalar implementations are the reference; the AVX2 variants live in a
// separate translation unit compiled with -mavx2 -mfma and must agree with
// the scalar path to floating-point reassociation accuracy (equivalence
// tests in tests/test_kernels.cpp). Dispatch is fixed at first use, so a
// given machine always runs the same code path.

#include <cstddef>

namespace vinet::kernels {

enum class Backend { scalar, avx2 };

// Best backend supported by this CPU.
Backend detected_backend();
Backend active_backend();
// Override (tests, benchmarking). Requesting avx2 on a CPU without it throws.
void set_backend(Backend b);

// sum_i x[i] * y[i]
double dot(const double* x, const double* y, std::size_t n);
// sum_i w[i] * x[i] * y[i]
double wdot(const double* w, const double* x, const double* y, std::size_t n);
// sum_i x[i]
double sum(const double* x, std::size_t n);
// y[i] += a * x[i]
void axpy(double a, const double* x, double* y, std::size_t n);
// y[i] = x[i] + a * y[i]
void aypx(double a, const double* x, double* y, std::size_t n);
// x[i] *= a
void scal(double a, double* x, std::size_t n);
// out[i] = x[i] + y[i]
void add(const double* x, const double* y, double* out, std::size_t n);
// out[i] = x[i] - y[i]
void sub(const double* x, const double* y, double* out, std::size_t n);
// out[i] = x[i] * y[i]
void mul(const double* x, const double* y, double* out, std::size_t n);
// acc[i] += x[i] * y[i]
void fmadd(const double* x, const double* y, double* acc, std::size_t n);

} // namespace vinet::kernels
