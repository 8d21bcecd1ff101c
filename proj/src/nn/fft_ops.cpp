#include <fftw3.h>

#include <complex>
#include <map>
#include <mutex>
#include <stdexcept>

#include "vinet/nn/tape.hpp"

// rfft2 / irfft2 layers on (C,H,W) tensors via FFTW r2c/c2r, plus the
// truncated spectral channel-mixing layer. Complex data is stored
// interleaved: shape (C,H,Wh,2) with Wh = W/2+1.
//
// Adjoint bookkeeping: as a real-linear map the adjoint of the unnormalized
// r2c is c2r applied to a preprocessed cotangent (interior columns halved,
// the kx = 0 and kx = W/2 columns Hermitian-symmetrized along ky), and the
// adjoint of the normalized c2r is r2c with interior columns doubled and the
// same symmetrization. FFTW's c2r only promises well-defined output for
// Hermitian input, so irfft2 projects its input before transforming.

namespace vinet::nn {

namespace {

struct PlanPair {
  fftw_plan r2c = nullptr;
  fftw_plan c2r = nullptr;
  int H = 0, W = 0;
};

class FftPlans {
 public:
  static FftPlans& instance() {
    static FftPlans p;
    return p;
  }

  const PlanPair& get(int H, int W) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = plans_.find({H, W});
    if (it != plans_.end()) return it->second;
    PlanPair pp;
    pp.H = H;
    pp.W = W;
    const int Wh = W / 2 + 1;
    std::vector<double> real(static_cast<std::size_t>(H) * W, 0.0);
    std::vector<fftw_complex> cplx(static_cast<std::size_t>(H) * Wh);
    pp.r2c = fftw_plan_dft_r2c_2d(H, W, real.data(), cplx.data(),
                                  FFTW_ESTIMATE | FFTW_UNALIGNED);
    pp.c2r = fftw_plan_dft_c2r_2d(H, W, cplx.data(), real.data(),
                                  FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!pp.r2c || !pp.c2r) throw std::runtime_error("fft: plan creation failed");
    return plans_.emplace(std::make_pair(H, W), pp).first->second;
  }

 private:
  std::mutex mu_;
  std::map<std::pair<int, int>, PlanPair> plans_;
};

// one channel: real (H*W) -> interleaved complex (H*Wh*2)
void run_r2c(int H, int W, const double* in, double* out) {
  const PlanPair& pp = FftPlans::instance().get(H, W);
  const int Wh = W / 2 + 1;
  std::vector<double> real(in, in + static_cast<std::size_t>(H) * W);
  std::vector<fftw_complex> cplx(static_cast<std::size_t>(H) * Wh);
  fftw_execute_dft_r2c(pp.r2c, real.data(), cplx.data());
  for (std::size_t i = 0; i < cplx.size(); ++i) {
    out[2 * i] = cplx[i][0];
    out[2 * i + 1] = cplx[i][1];
  }
}

// one channel: interleaved complex (H*Wh*2) -> real (H*W), unnormalized
void run_c2r(int H, int W, const double* in, double* out) {
  const PlanPair& pp = FftPlans::instance().get(H, W);
  const int Wh = W / 2 + 1;
  std::vector<fftw_complex> cplx(static_cast<std::size_t>(H) * Wh);
  for (std::size_t i = 0; i < cplx.size(); ++i) {
    cplx[i][0] = in[2 * i];
    cplx[i][1] = in[2 * i + 1];
  }
  fftw_execute_dft_c2r(pp.c2r, cplx.data(), out);
}

// Hermitian-symmetrize column kx along ky: Y[ky] <- (Y[ky] + conj(Y[(H-ky)%H]))/2.
void symmetrize_column(int H, int Wh, double* chan, int kx) {
  for (int ky = 0; ky <= H / 2; ++ky) {
    const int my = (H - ky) % H;
    double* a = chan + 2 * (static_cast<std::size_t>(ky) * Wh + kx);
    double* b = chan + 2 * (static_cast<std::size_t>(my) * Wh + kx);
    const double re = 0.5 * (a[0] + b[0]);
    const double im = 0.5 * (a[1] - b[1]);
    a[0] = re;
    a[1] = im;
    b[0] = re;
    b[1] = -im;
  }
}

// Columns kx=0 and kx=W/2 (when W even) carry self-conjugate redundancy.
void project_hermitian_edges(int H, int W, double* chan) {
  const int Wh = W / 2 + 1;
  symmetrize_column(H, Wh, chan, 0);
  if (W % 2 == 0) symmetrize_column(H, Wh, chan, Wh - 1);
}

void scale_interior_columns(int H, int W, double* chan, double factor) {
  const int Wh = W / 2 + 1;
  const int lo = 1, hi = (W % 2 == 0) ? Wh - 1 : Wh;
  for (int ky = 0; ky < H; ++ky)
    for (int kx = lo; kx < hi; ++kx) {
      double* p = chan + 2 * (static_cast<std::size_t>(ky) * Wh + kx);
      p[0] *= factor;
      p[1] *= factor;
    }
}

} // namespace

Value rfft2(Tape& t, Value x) {
  const Tensor& vx = t.value(x);
  if (vx.rank() != 3) throw std::invalid_argument("rfft2: expected (C,H,W)");
  const int C = vx.dim(0), H = vx.dim(1), W = vx.dim(2);
  const int Wh = W / 2 + 1;
  const std::size_t in_plane = static_cast<std::size_t>(H) * W;
  const std::size_t out_plane = static_cast<std::size_t>(H) * Wh * 2;

  Tensor out({C, H, Wh, 2});
  for (int c = 0; c < C; ++c)
    run_r2c(H, W, vx.data.data() + c * in_plane, out.data.data() + c * out_plane);

  return t.make_node(std::move(out), {x},
                     [x, C, H, W, in_plane, out_plane](Tape& tp, const Tensor& g) {
    Tensor gx({C, H, W});
    std::vector<double> cot(out_plane);
    for (int c = 0; c < C; ++c) {
      std::copy(g.data.begin() + c * out_plane, g.data.begin() + (c + 1) * out_plane,
                cot.begin());
      scale_interior_columns(H, W, cot.data(), 0.5);
      project_hermitian_edges(H, W, cot.data());
      run_c2r(H, W, cot.data(), gx.data.data() + c * in_plane);
    }
    tp.accumulate(x, gx);
  });
}

Value irfft2(Tape& t, Value x, int w_full) {
  const Tensor& vx = t.value(x);
  if (vx.rank() != 4 || vx.dim(3) != 2)
    throw std::invalid_argument("irfft2: expected (C,H,Wh,2)");
  const int C = vx.dim(0), H = vx.dim(1), Wh = vx.dim(2), W = w_full;
  if (Wh != W / 2 + 1) throw std::invalid_argument("irfft2: Wh does not match w_full");
  const std::size_t in_plane = static_cast<std::size_t>(H) * Wh * 2;
  const std::size_t out_plane = static_cast<std::size_t>(H) * W;
  const double norm = 1.0 / (static_cast<double>(H) * W);

  Tensor out({C, H, W});
  std::vector<double> buf(in_plane);
  for (int c = 0; c < C; ++c) {
    std::copy(vx.data.begin() + c * in_plane, vx.data.begin() + (c + 1) * in_plane,
              buf.begin());
    project_hermitian_edges(H, W, buf.data());
    run_c2r(H, W, buf.data(), out.data.data() + c * out_plane);
  }
  for (double& v : out.data) v *= norm;

  return t.make_node(std::move(out), {x},
                     [x, C, H, W, in_plane, out_plane, norm](Tape& tp, const Tensor& g) {
    Tensor gx(tp.value(x).shape);
    for (int c = 0; c < C; ++c) {
      double* dst = gx.data.data() + c * in_plane;
      run_r2c(H, W, g.data.data() + c * out_plane, dst);
      scale_interior_columns(H, W, dst, 2.0);
      project_hermitian_edges(H, W, dst);
      for (std::size_t i = 0; i < in_plane; ++i) dst[i] *= norm;
    }
    tp.accumulate(x, gx);
  });
}

Value spectral_mul(Tape& t, Value x, Value w1, Value w2, int modes) {
  const Tensor& vx = t.value(x);
  const Tensor& v1 = t.value(w1);
  const Tensor& v2 = t.value(w2);
  if (vx.rank() != 4 || vx.dim(3) != 2)
    throw std::invalid_argument("spectral_mul: expected (C,H,Wh,2) input");
  const int Cin = vx.dim(0), H = vx.dim(1), Wh = vx.dim(2);
  if (v1.rank() != 5 || v1.dim(1) != Cin || v1.dim(2) != modes || v1.dim(3) != modes ||
      v1.dim(4) != 2 || !v1.same_shape(v2))
    throw std::invalid_argument("spectral_mul: weights must be (Cout,Cin,m,m,2) twins");
  const int Cout = v1.dim(0), m = modes;
  if (2 * m > H || m > Wh)
    throw std::invalid_argument("spectral_mul: too many modes for this resolution");

  const auto xi = [H, Wh](int c, int ky, int kx) {
    return 2 * ((static_cast<std::size_t>(c) * H + ky) * Wh + kx);
  };
  const auto wi = [Cin, m](int co, int ci, int a, int b) {
    return 2 * (((static_cast<std::size_t>(co) * Cin + ci) * m + a) * m + b);
  };

  Tensor out({Cout, H, Wh, 2});
  // block 1: rows 0..m-1; block 2: rows H-m..H-1; columns 0..m-1
  for (int co = 0; co < Cout; ++co)
    for (int ci = 0; ci < Cin; ++ci)
      for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) {
          {
            const double wr = v1[wi(co, ci, a, b)], wim = v1[wi(co, ci, a, b) + 1];
            const std::size_t src = xi(ci, a, b), dst = xi(co, a, b);
            out.data[dst] += wr * vx.data[src] - wim * vx.data[src + 1];
            out.data[dst + 1] += wr * vx.data[src + 1] + wim * vx.data[src];
          }
          {
            const double wr = v2[wi(co, ci, a, b)], wim = v2[wi(co, ci, a, b) + 1];
            const std::size_t src = xi(ci, H - m + a, b), dst = xi(co, H - m + a, b);
            out.data[dst] += wr * vx.data[src] - wim * vx.data[src + 1];
            out.data[dst + 1] += wr * vx.data[src + 1] + wim * vx.data[src];
          }
        }

  return t.make_node(std::move(out), {x, w1, w2},
                     [x, w1, w2, Cin, Cout, H, Wh, m, xi, wi](Tape& tp, const Tensor& g) {
    const Tensor& vx = tp.value(x);
    const Tensor& v1 = tp.value(w1);
    const Tensor& v2 = tp.value(w2);
    Tensor gx(vx.shape), g1(v1.shape), g2(v2.shape);
    for (int co = 0; co < Cout; ++co)
      for (int ci = 0; ci < Cin; ++ci)
        for (int a = 0; a < m; ++a)
          for (int b = 0; b < m; ++b) {
            // y = w * x (complex) => gx += conj(w) * gy, gw += conj(x) * gy
            {
              const std::size_t iw = wi(co, ci, a, b);
              const std::size_t src = xi(ci, a, b), dst = xi(co, a, b);
              const double gr = g.data[dst], gi = g.data[dst + 1];
              const double wr = v1[iw], wim = v1[iw + 1];
              const double xr = vx.data[src], xim = vx.data[src + 1];
              gx.data[src] += wr * gr + wim * gi;
              gx.data[src + 1] += wr * gi - wim * gr;
              g1[iw] += xr * gr + xim * gi;
              g1[iw + 1] += xr * gi - xim * gr;
            }
            {
              const std::size_t iw = wi(co, ci, a, b);
              const std::size_t src = xi(ci, H - m + a, b), dst = xi(co, H - m + a, b);
              const double gr = g.data[dst], gi = g.data[dst + 1];
              const double wr = v2[iw], wim = v2[iw + 1];
              const double xr = vx.data[src], xim = vx.data[src + 1];
              gx.data[src] += wr * gr + wim * gi;
              gx.data[src + 1] += wr * gi - wim * gr;
              g2[iw] += xr * gr + xim * gi;
              g2[iw + 1] += xr * gi - xim * gr;
            }
          }
    tp.accumulate(x, gx);
    tp.accumulate(w1, g1);
    tp.accumulate(w2, g2);
  });
}

} // namespace vinet::nn
