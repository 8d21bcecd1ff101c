#pragma once

// Adam with bias correction. Learning-rate scheduling is the caller's job.

#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "vinet/nn/tensor.hpp"

namespace vinet::nn {

class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, double lr) {
    if (params.size() != grads.size()) throw std::invalid_argument("Adam: size mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t p = 0; p < params.size(); ++p) {
      Tensor& w = *params[p];
      const Tensor& g = grads[p];
      if (!w.same_shape(g)) throw std::invalid_argument("Adam: grad shape mismatch");
      State& s = state_[params[p]];
      if (s.m.numel() != w.numel()) {
        s.m = Tensor(w.shape);
        s.v = Tensor(w.shape);
      }
      for (std::size_t i = 0; i < w.numel(); ++i) {
        s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g[i];
        s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g[i] * g[i];
        const double mhat = s.m[i] / bc1;
        const double vhat = s.v[i] / bc2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  long steps_taken() const { return t_; }

 private:
  struct State {
    Tensor m, v;
  };
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::unordered_map<const Tensor*, State> state_;
};

} // namespace vinet::nn
