#include <doctest.h>

#include <cmath>
#include <functional>

#include "vinet/nn/adam.hpp"
#include "vinet/nn/gradcheck.hpp"
#include "vinet/nn/layers.hpp"
#include "vinet/nn/tape.hpp"
#include "vinet/rng.hpp"

using namespace vinet;
using nn::Tape;
using nn::Tensor;
using nn::Value;

namespace {

Tensor random_tensor(std::vector<int> shape, std::uint64_t seed, double scale = 1.0,
                     double min_abs = 0.0) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (double& v : t.data) {
    do {
      v = scale * rng.normal();
    } while (std::fabs(v) < min_abs);
  }
  return t;
}

// Builds loss = <r, f(params)> and runs the FD check over all params.
double layer_fd_error(std::vector<Tensor*> params,
                      const std::function<Value(Tape&)>& build, std::uint64_t proj_seed = 99) {
  const auto loss_of = [&](Tape& t) {
    Value out = build(t);
    const Tensor r = random_tensor(t.value(out).shape, proj_seed, 1.0);
    return nn::dot(t, out, t.constant(r));
  };
  const auto loss_value = [&]() {
    Tape t;
    return t.value(loss_of(t))[0];
  };
  const auto grads = [&]() {
    Tape t;
    t.backward(loss_of(t));
    std::vector<Tensor> g;
    for (Tensor* p : params) g.push_back(t.grad_of(*p));
    return g;
  };
  return nn::grad_check(params, loss_value, grads).max_rel_err;
}

} // namespace

TEST_CASE("identity evaluation returns the input unchanged") {
  Tape t;
  Tensor x = random_tensor({3, 4, 5}, 1);
  Value v = t.constant(x);
  CHECK(t.value(v).data == x.data);
}

TEST_CASE("conv2d with the identity kernel reproduces the input") {
  Tensor x = random_tensor({2, 6, 7}, 2);
  Tensor w({2, 2, 3, 3});
  w.data[((0 * 2 + 0) * 3 + 1) * 3 + 1] = 1.0;  // center tap, channel 0 -> 0
  w.data[((1 * 2 + 1) * 3 + 1) * 3 + 1] = 1.0;  // center tap, channel 1 -> 1
  Tensor b({2});
  Tape t;
  Value y = nn::conv2d_reflect(t, t.constant(x), t.param(w), t.param(b));
  for (std::size_t i = 0; i < x.numel(); ++i)
    CHECK(t.value(y)[i] == doctest::Approx(x[i]).epsilon(1e-14));
}

TEST_CASE("linear-in-parameters loss has the exact gradient") {
  Tensor w = random_tensor({17}, 3);
  const Tensor x = random_tensor({17}, 4);
  Tape t;
  Value loss = nn::sum(t, nn::mul(t, t.param(w), t.constant(x)));
  t.backward(loss);
  const Tensor g = t.grad_of(w);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(g[i] == x[i]);
}

TEST_CASE("fan-out accumulates both paths") {
  Tensor w = random_tensor({9}, 5);
  const auto build = [&](Tape& t) {
    Value v = t.param(w);
    Value a = nn::square(t, v);
    Value b = nn::scale(t, v, 3.0);
    return nn::add(t, a, b);
  };
  CHECK(layer_fd_error({&w}, build) < 1e-6);
}

TEST_CASE("gradient checks: pointwise and arithmetic ops") {
  Tensor a = random_tensor({4, 5}, 6, 1.0, 0.02);
  Tensor b = random_tensor({4, 5}, 7, 1.0, 0.2);
  CHECK(layer_fd_error({&a}, [&](Tape& t) { return nn::relu(t, t.param(a)); }) < 1e-4);
  CHECK(layer_fd_error({&a}, [&](Tape& t) { return nn::softplus(t, t.param(a)); }) < 1e-4);
  CHECK(layer_fd_error({&a}, [&](Tape& t) { return nn::sigmoid(t, t.param(a)); }) < 1e-4);
  CHECK(layer_fd_error({&a, &b}, [&](Tape& t) {
          return nn::mul(t, t.param(a), t.param(b));
        }) < 1e-6);
  CHECK(layer_fd_error({&a, &b}, [&](Tape& t) {
          return nn::div(t, t.param(a), t.param(b));
        }) < 1e-4);
  CHECK(layer_fd_error({&a, &b}, [&](Tape& t) {
          return nn::sub(t, t.param(a), t.param(b));
        }) < 1e-6);

  Tensor pos = random_tensor({6}, 8, 0.0, 0.0);
  for (double& v : pos.data) v = 0.5 + std::fabs(v) + 1.0;
  CHECK(layer_fd_error({&pos}, [&](Tape& t) { return nn::log_v(t, t.param(pos)); }) < 1e-4);
  CHECK(layer_fd_error({&pos}, [&](Tape& t) { return nn::digamma_v(t, t.param(pos)); }) < 1e-4);
  CHECK(layer_fd_error({&pos}, [&](Tape& t) { return nn::log_gamma_v(t, t.param(pos)); }) < 1e-4);
}

TEST_CASE("softplus is stable and accurate at extreme inputs") {
  Tensor big({4}, {50.0, 500.0, -50.0, -500.0});
  Tape t;
  Value y = nn::softplus(t, t.param(big));
  CHECK(t.value(y)[0] == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(t.value(y)[1] == doctest::Approx(500.0).epsilon(1e-12));
  CHECK(t.value(y)[2] == doctest::Approx(std::exp(-50.0)).epsilon(1e-10));
  CHECK(std::isfinite(t.value(y)[3]));
  CHECK(layer_fd_error({&big}, [&](Tape& tt) { return nn::softplus(tt, tt.param(big)); }) <
        1e-4);
}

TEST_CASE("gradient checks: reductions and shape ops") {
  Tensor a = random_tensor({3, 4, 4}, 9);
  Tensor b = random_tensor({3, 4, 4}, 10);
  CHECK(layer_fd_error({&a}, [&](Tape& t) { return nn::sum(t, t.param(a)); }) < 1e-6);
  CHECK(layer_fd_error({&a}, [&](Tape& t) { return nn::mean(t, t.param(a)); }) < 1e-6);
  CHECK(layer_fd_error({&a, &b}, [&](Tape& t) {
          return nn::mse(t, t.param(a), t.param(b));
        }) < 1e-4);
  CHECK(layer_fd_error({&a, &b}, [&](Tape& t) {
          return nn::concat_channels(t, {t.param(a), t.param(b)});
        }) < 1e-6);
  CHECK(layer_fd_error({&a}, [&](Tape& t) {
          return nn::slice_channels(t, t.param(a), 1, 2);
        }) < 1e-6);
  std::vector<double> w(a.numel());
  Rng rng(31);
  for (double& v : w) v = rng.uniform();
  CHECK(layer_fd_error({&a, &b}, [&](Tape& t) {
          return nn::weighted_dot(t, t.param(a), t.param(b), w);
        }) < 1e-6);
}

TEST_CASE("gradient checks: conv2d, channel_linear, linear (linear layers at 1e-6)") {
  Tensor x = random_tensor({2, 5, 6}, 11);
  Tensor w = random_tensor({3, 2, 3, 3}, 12, 0.5);
  Tensor b = random_tensor({3}, 13, 0.1);
  CHECK(layer_fd_error({&x, &w, &b}, [&](Tape& t) {
          return nn::conv2d_reflect(t, t.param(x), t.param(w), t.param(b));
        }) < 1e-6);

  Tensor cw = random_tensor({4, 2}, 14);
  Tensor cb = random_tensor({4}, 15, 0.1);
  CHECK(layer_fd_error({&x, &cw, &cb}, [&](Tape& t) {
          return nn::channel_linear(t, t.param(x), t.param(cw), t.param(cb));
        }) < 1e-6);

  Tensor v = random_tensor({7}, 16);
  Tensor lw = random_tensor({3, 7}, 17);
  Tensor lb = random_tensor({3}, 18);
  CHECK(layer_fd_error({&v, &lw, &lb}, [&](Tape& t) {
          return nn::linear(t, t.param(v), t.param(lw), t.param(lb));
        }) < 1e-6);
}

TEST_CASE("gradient checks: pooling and upsampling") {
  Tensor x = random_tensor({2, 6, 8}, 19);
  CHECK(layer_fd_error({&x}, [&](Tape& t) { return nn::avgpool2(t, t.param(x)); }) < 1e-6);
  Tensor s = random_tensor({2, 3, 4}, 20);
  CHECK(layer_fd_error({&s}, [&](Tape& t) { return nn::upsample2(t, t.param(s)); }) < 1e-6);

  Tensor odd = random_tensor({1, 5, 6}, 21);
  Tape t;
  CHECK_THROWS_AS(nn::avgpool2(t, t.param(odd)), std::invalid_argument);
}

TEST_CASE("conv2d adjoint identity via the tape") {
  // with zero bias conv is linear in x: <conv(x), y> must equal <x, conv^T(y)>
  Tensor x = random_tensor({2, 6, 6}, 22);
  Tensor w = random_tensor({3, 2, 3, 3}, 23, 0.7);
  Tensor b({3});
  const Tensor y = random_tensor({3, 6, 6}, 24);

  Tape t;
  Value out = nn::conv2d_reflect(t, t.param(x), t.constant(w), t.constant(b));
  Value ip = nn::dot(t, out, t.constant(y));
  t.backward(ip);
  const Tensor gx = t.grad_of(x);  // = conv^T(y)

  double lhs = 0.0;
  for (std::size_t i = 0; i < y.numel(); ++i) lhs += t.value(out)[i] * y[i];
  double rhs = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) rhs += x[i] * gx[i];
  CHECK(std::fabs(lhs - rhs) <= 1e-10 * std::max(std::fabs(lhs), 1.0));
}

TEST_CASE("rfft2/irfft2 round trip and gradients (even and odd widths)") {
  for (int W : {16, 15}) {
    Tensor x = random_tensor({1, 16, W}, 30 + W);
    Tape t;
    Value spec = nn::rfft2(t, t.param(x));
    Value back = nn::irfft2(t, spec, W);
    for (std::size_t i = 0; i < x.numel(); ++i)
      CHECK(t.value(back)[i] == doctest::Approx(x[i]).epsilon(1e-12));
  }

  Tensor x = random_tensor({1, 6, 6}, 40);
  CHECK(layer_fd_error({&x}, [&](Tape& t) { return nn::rfft2(t, t.param(x)); }) < 1e-6);

  Tensor xs = random_tensor({1, 4, 4}, 41);
  CHECK(layer_fd_error({&xs}, [&](Tape& t) {
          return nn::irfft2(t, nn::rfft2(t, t.param(xs)), 4);
        }) < 1e-6);
}

TEST_CASE("spectral_mul gradient check") {
  const int m = 2;
  Tensor x = random_tensor({2, 6, 6}, 50);
  Tensor w1 = random_tensor({3, 2, m, m, 2}, 51, 0.5);
  Tensor w2 = random_tensor({3, 2, m, m, 2}, 52, 0.5);
  CHECK(layer_fd_error({&x, &w1, &w2}, [&](Tape& t) {
          Value spec = nn::rfft2(t, t.param(x));
          Value mixed = nn::spectral_mul(t, spec, t.param(w1), t.param(w2), m);
          return nn::irfft2(t, mixed, 6);
        }) < 1e-4);
}

TEST_CASE("determinism: same seed gives bitwise-equal outputs and gradients") {
  const auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    nn::Conv2d conv(2, 3);
    conv.init(rng);
    Tensor x = random_tensor({2, 5, 5}, seed + 1);
    Tape t;
    Value loss = nn::sum(t, nn::relu(t, conv.forward(t, t.param(x))));
    t.backward(loss);
    return std::make_pair(t.value(loss)[0], t.grad_of(conv.weight).data);
  };
  const auto a = run(7);
  const auto b = run(7);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("adam: zero gradient leaves parameters, counter advances") {
  Tensor w = random_tensor({5}, 60);
  const Tensor w0 = w;
  nn::Adam opt;
  opt.step({&w}, {Tensor({5})}, 0.1);
  CHECK(w.data == w0.data);
  CHECK(opt.steps_taken() == 1);
}

TEST_CASE("adam: descends a quadratic") {
  Tensor w({1}, {1.0});
  nn::Adam opt;
  // one step on f = w^2/2: gradient w
  opt.step({&w}, {Tensor({1}, {w[0]})}, 0.1);
  CHECK(w[0] < 1.0);

  // 200 steps on a 2-D quadratic
  Tensor p({2}, {2.0, -3.0});
  nn::Adam opt2;
  double loss = 0.0;
  for (int i = 0; i < 200; ++i) {
    Tensor g({2}, {3.0 * p[0], 0.5 * p[1]});
    loss = 0.5 * (3.0 * p[0] * p[0] + 0.5 * p[1] * p[1]);
    opt2.step({&p}, {g}, 0.15);
  }
  const double start = 0.5 * (3.0 * 4.0 + 0.5 * 9.0);
  CHECK(loss < 1e-6 * start);
}

TEST_CASE("backward rejects non-scalar losses and zero-bias residual init is exact") {
  Tensor x = random_tensor({2, 4, 4}, 70);
  Tape t;
  Value v = t.param(x);
  CHECK_THROWS_AS(t.backward(v), std::invalid_argument);

  // a zero-initialized final conv keeps the residual path an exact identity
  Rng rng(71);
  nn::Conv2d head(2, 2);
  head.init_zero();
  Tape t2;
  Value inp = t2.param(x);
  Value out = nn::add(t2, inp, head.forward(t2, inp));
  CHECK(t2.value(out).data == x.data);
}
