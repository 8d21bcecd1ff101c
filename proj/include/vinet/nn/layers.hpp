#pragma once

// Parameterized layers: plain structs owning their tensors, bound onto a
// Tape per forward pass. He-style init scaled for the small desk widths.

#include <cmath>
#include <string>
#include <vector>

#include "vinet/nn/tape.hpp"
#include "vinet/rng.hpp"

namespace vinet::nn {

struct ParamList {
  std::vector<std::string> names;
  std::vector<Tensor*> tensors;

  void add(const std::string& name, Tensor& t) {
    names.push_back(name);
    tensors.push_back(&t);
  }
  void absorb(const std::string& prefix, ParamList other) {
    for (std::size_t i = 0; i < other.tensors.size(); ++i) {
      names.push_back(prefix + "." + other.names[i]);
      tensors.push_back(other.tensors[i]);
    }
  }
};

struct Conv2d {
  int cin = 0, cout = 0, k = 3;
  Tensor weight, bias;

  Conv2d() = default;
  Conv2d(int cin_, int cout_, int k_ = 3) : cin(cin_), cout(cout_), k(k_) {
    weight = Tensor({cout, cin, k, k});
    bias = Tensor({cout});
  }

  void init(Rng& rng) {
    const double s = std::sqrt(2.0 / (cin * k * k));
    for (double& v : weight.data) v = s * rng.normal();
    for (double& v : bias.data) v = 0.0;
  }
  void init_zero() {
    for (double& v : weight.data) v = 0.0;
    for (double& v : bias.data) v = 0.0;
  }

  Value forward(Tape& t, Value x) {
    return conv2d_reflect(t, x, t.param(weight), t.param(bias));
  }
  void params(ParamList& out, const std::string& name) {
    out.add(name + ".weight", weight);
    out.add(name + ".bias", bias);
  }
};

struct ChannelLinear {
  int cin = 0, cout = 0;
  Tensor weight, bias;

  ChannelLinear() = default;
  ChannelLinear(int cin_, int cout_) : cin(cin_), cout(cout_) {
    weight = Tensor({cout, cin});
    bias = Tensor({cout});
  }
  void init(Rng& rng) {
    const double s = std::sqrt(1.0 / cin);
    for (double& v : weight.data) v = s * rng.normal();
    for (double& v : bias.data) v = 0.0;
  }
  Value forward(Tape& t, Value x) {
    return channel_linear(t, x, t.param(weight), t.param(bias));
  }
  void params(ParamList& out, const std::string& name) {
    out.add(name + ".weight", weight);
    out.add(name + ".bias", bias);
  }
};

struct SpectralConv {
  int cin = 0, cout = 0, modes = 0;
  Tensor w1, w2;

  SpectralConv() = default;
  SpectralConv(int cin_, int cout_, int modes_) : cin(cin_), cout(cout_), modes(modes_) {
    w1 = Tensor({cout, cin, modes, modes, 2});
    w2 = Tensor({cout, cin, modes, modes, 2});
  }
  void init(Rng& rng) {
    const double s = 1.0 / (cin * modes);
    for (double& v : w1.data) v = s * rng.normal();
    for (double& v : w2.data) v = s * rng.normal();
  }
  // x is (C,H,W) real; returns (Cout,H,W) real
  Value forward(Tape& t, Value x) {
    const int W = t.value(x).dim(2);
    Value spec = rfft2(t, x);
    Value mixed = spectral_mul(t, spec, t.param(w1), t.param(w2), modes);
    return irfft2(t, mixed, W);
  }
  void params(ParamList& out, const std::string& name) {
    out.add(name + ".w1", w1);
    out.add(name + ".w2", w2);
  }
};

} // namespace vinet::nn
