#include <cmath>
#include <stdexcept>
#include <string>

#include "vinet/kernels.hpp"
#include "vinet/nn/tape.hpp"

// Structured layer ops: convolution with reflect padding, channel mixing,
// dense linear, pooling and upsampling. Backward passes mirror the forward
// loops with roles swapped, so each (op, adjoint) pair is verified by the
// finite-difference gradient checks.

namespace vinet::nn {

namespace {

inline int reflect(int p, int n) {
  if (p < 0) return -p;
  if (p >= n) return 2 * (n - 1) - p;
  return p;
}

void check_chw(const Tensor& x, const char* op) {
  if (x.rank() != 3)
    throw std::invalid_argument(std::string(op) + ": expected (C,H,W) input");
}

} // namespace

Value conv2d_reflect(Tape& t, Value x, Value weight, Value bias) {
  const Tensor& vx = t.value(x);
  const Tensor& vw = t.value(weight);
  const Tensor& vb = t.value(bias);
  check_chw(vx, "conv2d");
  if (vw.rank() != 4 || vw.dim(2) != vw.dim(3) || vw.dim(2) % 2 == 0)
    throw std::invalid_argument("conv2d: weight must be (Cout,Cin,K,K) with K odd");
  const int Cout = vw.dim(0), Cin = vw.dim(1), K = vw.dim(2);
  if (vx.dim(0) != Cin) throw std::invalid_argument("conv2d: input channels mismatch");
  if (vb.numel() != static_cast<std::size_t>(Cout))
    throw std::invalid_argument("conv2d: bias size mismatch");
  const int H = vx.dim(1), W = vx.dim(2);
  const int pad = K / 2;
  if (H <= pad || W <= pad)
    throw std::invalid_argument("conv2d: input too small for reflect padding");

  const std::size_t plane = static_cast<std::size_t>(H) * W;
  Tensor out({Cout, H, W});
  for (int co = 0; co < Cout; ++co)
    std::fill(out.data.begin() + co * plane, out.data.begin() + (co + 1) * plane, vb[co]);

  for (int co = 0; co < Cout; ++co) {
    for (int ci = 0; ci < Cin; ++ci) {
      for (int ky = 0; ky < K; ++ky) {
        const int dy = ky - pad;
        for (int kx = 0; kx < K; ++kx) {
          const int dx = kx - pad;
          const double w = vw[((static_cast<std::size_t>(co) * Cin + ci) * K + ky) * K + kx];
          if (w == 0.0) continue;
          const int lo = std::max(0, -dx), hi = std::min(W, W - dx);
          for (int y = 0; y < H; ++y) {
            const int ry = reflect(y + dy, H);
            const double* in_row = vx.data.data() + ci * plane + static_cast<std::size_t>(ry) * W;
            double* out_row = out.data.data() + co * plane + static_cast<std::size_t>(y) * W;
            if (lo < hi) kernels::axpy(w, in_row + lo + dx, out_row + lo, hi - lo);
            for (int xx = 0; xx < lo; ++xx) out_row[xx] += w * in_row[reflect(xx + dx, W)];
            for (int xx = hi; xx < W; ++xx) out_row[xx] += w * in_row[reflect(xx + dx, W)];
          }
        }
      }
    }
  }

  return t.make_node(std::move(out), {x, weight, bias},
                     [x, weight, bias, Cout, Cin, K, H, W, pad, plane](Tape& tp,
                                                                       const Tensor& g) {
    const Tensor& vx = tp.value(x);
    const Tensor& vw = tp.value(weight);
    Tensor gx(vx.shape);
    Tensor gw(vw.shape);
    Tensor gb({Cout});
    for (int co = 0; co < Cout; ++co)
      gb[co] = kernels::sum(g.data.data() + co * plane, plane);

    for (int co = 0; co < Cout; ++co) {
      for (int ci = 0; ci < Cin; ++ci) {
        for (int ky = 0; ky < K; ++ky) {
          const int dy = ky - pad;
          for (int kx = 0; kx < K; ++kx) {
            const int dx = kx - pad;
            const std::size_t widx =
                ((static_cast<std::size_t>(co) * Cin + ci) * K + ky) * K + kx;
            const double w = vw[widx];
            const int lo = std::max(0, -dx), hi = std::min(W, W - dx);
            double acc = 0.0;
            for (int y = 0; y < H; ++y) {
              const int ry = reflect(y + dy, H);
              const double* in_row =
                  vx.data.data() + ci * plane + static_cast<std::size_t>(ry) * W;
              const double* g_row =
                  g.data.data() + co * plane + static_cast<std::size_t>(y) * W;
              double* gx_row = gx.data.data() + ci * plane + static_cast<std::size_t>(ry) * W;
              if (lo < hi) {
                acc += kernels::dot(in_row + lo + dx, g_row + lo, hi - lo);
                kernels::axpy(w, g_row + lo, gx_row + lo + dx, hi - lo);
              }
              for (int xx = 0; xx < lo; ++xx) {
                const int rx = reflect(xx + dx, W);
                acc += in_row[rx] * g_row[xx];
                gx_row[rx] += w * g_row[xx];
              }
              for (int xx = hi; xx < W; ++xx) {
                const int rx = reflect(xx + dx, W);
                acc += in_row[rx] * g_row[xx];
                gx_row[rx] += w * g_row[xx];
              }
            }
            gw[widx] = acc;
          }
        }
      }
    }
    tp.accumulate(x, gx);
    tp.accumulate(weight, gw);
    tp.accumulate(bias, gb);
  });
}

Value channel_linear(Tape& t, Value x, Value weight, Value bias) {
  const Tensor& vx = t.value(x);
  const Tensor& vw = t.value(weight);
  const Tensor& vb = t.value(bias);
  check_chw(vx, "channel_linear");
  if (vw.rank() != 2 || vw.dim(1) != vx.dim(0))
    throw std::invalid_argument("channel_linear: weight shape mismatch");
  const int Cout = vw.dim(0), Cin = vw.dim(1);
  if (vb.numel() != static_cast<std::size_t>(Cout))
    throw std::invalid_argument("channel_linear: bias size mismatch");
  const int H = vx.dim(1), W = vx.dim(2);
  const std::size_t plane = static_cast<std::size_t>(H) * W;

  Tensor out({Cout, H, W});
  for (int co = 0; co < Cout; ++co) {
    double* dst = out.data.data() + co * plane;
    std::fill(dst, dst + plane, vb[co]);
    for (int ci = 0; ci < Cin; ++ci)
      kernels::axpy(vw[static_cast<std::size_t>(co) * Cin + ci], vx.data.data() + ci * plane,
                    dst, plane);
  }

  return t.make_node(std::move(out), {x, weight, bias},
                     [x, weight, bias, Cout, Cin, plane](Tape& tp, const Tensor& g) {
    const Tensor& vx = tp.value(x);
    const Tensor& vw = tp.value(weight);
    Tensor gx(vx.shape);
    Tensor gw(vw.shape);
    Tensor gb({Cout});
    for (int co = 0; co < Cout; ++co) {
      const double* grow = g.data.data() + co * plane;
      gb[co] = kernels::sum(grow, plane);
      for (int ci = 0; ci < Cin; ++ci) {
        kernels::axpy(vw[static_cast<std::size_t>(co) * Cin + ci], grow,
                      gx.data.data() + ci * plane, plane);
        gw[static_cast<std::size_t>(co) * Cin + ci] =
            kernels::dot(grow, vx.data.data() + ci * plane, plane);
      }
    }
    tp.accumulate(x, gx);
    tp.accumulate(weight, gw);
    tp.accumulate(bias, gb);
  });
}

Value linear(Tape& t, Value x, Value weight, Value bias) {
  const Tensor& vx = t.value(x);
  const Tensor& vw = t.value(weight);
  const Tensor& vb = t.value(bias);
  if (vw.rank() != 2 || vw.dim(1) != static_cast<int>(vx.numel()))
    throw std::invalid_argument("linear: weight shape mismatch");
  const int M = vw.dim(0), N = vw.dim(1);
  if (vb.numel() != static_cast<std::size_t>(M))
    throw std::invalid_argument("linear: bias size mismatch");

  Tensor out({M});
  for (int i = 0; i < M; ++i)
    out[i] = vb[i] + kernels::dot(vw.data.data() + static_cast<std::size_t>(i) * N,
                                  vx.data.data(), N);

  return t.make_node(std::move(out), {x, weight, bias},
                     [x, weight, bias, M, N](Tape& tp, const Tensor& g) {
    const Tensor& vx = tp.value(x);
    const Tensor& vw = tp.value(weight);
    Tensor gx(vx.shape);
    Tensor gw(vw.shape);
    for (int i = 0; i < M; ++i) {
      kernels::axpy(g[i], vw.data.data() + static_cast<std::size_t>(i) * N, gx.data.data(), N);
      kernels::axpy(g[i], vx.data.data(), gw.data.data() + static_cast<std::size_t>(i) * N, N);
    }
    tp.accumulate(x, gx);
    tp.accumulate(weight, gw);
    tp.accumulate(bias, g);
  });
}

Value avgpool2(Tape& t, Value x) {
  const Tensor& vx = t.value(x);
  check_chw(vx, "avgpool2");
  const int C = vx.dim(0), H = vx.dim(1), W = vx.dim(2);
  if (H % 2 != 0 || W % 2 != 0)
    throw std::invalid_argument("avgpool2: spatial extents must be even, got " +
                                std::to_string(H) + "x" + std::to_string(W));
  const int h = H / 2, w = W / 2;
  Tensor out({C, h, w});
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const auto at = [&](int y, int xx) {
          return vx[(static_cast<std::size_t>(c) * H + y) * W + xx];
        };
        out[(static_cast<std::size_t>(c) * h + i) * w + j] =
            0.25 * (at(2 * i, 2 * j) + at(2 * i + 1, 2 * j) + at(2 * i, 2 * j + 1) +
                    at(2 * i + 1, 2 * j + 1));
      }
  return t.make_node(std::move(out), {x}, [x, C, H, W, h, w](Tape& tp, const Tensor& g) {
    Tensor gx({C, H, W});
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          const double gv = 0.25 * g[(static_cast<std::size_t>(c) * h + i) * w + j];
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
              gx[(static_cast<std::size_t>(c) * H + 2 * i + a) * W + 2 * j + b] += gv;
        }
    tp.accumulate(x, gx);
  });
}

Value upsample2(Tape& t, Value x) {
  const Tensor& vx = t.value(x);
  check_chw(vx, "upsample2");
  const int C = vx.dim(0), h = vx.dim(1), w = vx.dim(2);
  const int H = 2 * h, W = 2 * w;
  Tensor out({C, H, W});
  const auto in = [&](int c, int i, int j) {
    i = std::min(i, h - 1);
    j = std::min(j, w - 1);
    return vx[(static_cast<std::size_t>(c) * h + i) * w + j];
  };
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const double v00 = in(c, i, j), v10 = in(c, i + 1, j), v01 = in(c, i, j + 1),
                     v11 = in(c, i + 1, j + 1);
        double* base = out.data.data() + (static_cast<std::size_t>(c) * H + 2 * i) * W + 2 * j;
        base[0] = v00;
        base[1] = 0.5 * (v00 + v01);
        base[W] = 0.5 * (v00 + v10);
        base[W + 1] = 0.25 * (v00 + v01 + v10 + v11);
      }
  return t.make_node(std::move(out), {x}, [x, C, h, w, H, W](Tape& tp, const Tensor& g) {
    Tensor gx({C, h, w});
    const auto acc = [&](int c, int i, int j, double v) {
      i = std::min(i, h - 1);
      j = std::min(j, w - 1);
      gx[(static_cast<std::size_t>(c) * h + i) * w + j] += v;
    };
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          const double* base =
              g.data.data() + (static_cast<std::size_t>(c) * H + 2 * i) * W + 2 * j;
          acc(c, i, j, base[0]);
          acc(c, i, j, 0.5 * base[1]);
          acc(c, i, j + 1, 0.5 * base[1]);
          acc(c, i, j, 0.5 * base[W]);
          acc(c, i + 1, j, 0.5 * base[W]);
          acc(c, i, j, 0.25 * base[W + 1]);
          acc(c, i, j + 1, 0.25 * base[W + 1]);
          acc(c, i + 1, j, 0.25 * base[W + 1]);
          acc(c, i + 1, j + 1, 0.25 * base[W + 1]);
        }
    tp.accumulate(x, gx);
  });
}

} // namespace vinet::nn
