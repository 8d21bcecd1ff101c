#pragma once

// Central finite differences against the tape gradients. Large parameter
// tensors are subsampled deterministically.

#include <cmath>
#include <functional>
#include <vector>

#include "vinet/nn/tensor.hpp"
#include "vinet/rng.hpp"

namespace vinet::nn {

struct GradCheckConfig {
  double step = 1e-5;
  int max_elements_per_param = 24;
  std::uint64_t seed = 7;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t elements_checked = 0;
};

// loss_value(): evaluates the scalar loss at the current parameters;
// autodiff_grads(): gradients per parameter (same order as params).
inline GradCheckReport grad_check(const std::vector<Tensor*>& params,
                                  const std::function<double()>& loss_value,
                                  const std::function<std::vector<Tensor>()>& autodiff_grads,
                                  const GradCheckConfig& cfg = {}) {
  GradCheckReport rep;
  const std::vector<Tensor> grads = autodiff_grads();
  Rng rng(cfg.seed);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& w = *params[p];
    const std::size_t n = w.numel();
    std::vector<std::size_t> idx;
    if (static_cast<int>(n) <= cfg.max_elements_per_param) {
      for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
    } else {
      for (int i = 0; i < cfg.max_elements_per_param; ++i)
        idx.push_back(static_cast<std::size_t>(rng.uniform() * n));
    }
    for (std::size_t i : idx) {
      const double keep = w[i];
      w[i] = keep + cfg.step;
      const double lp = loss_value();
      w[i] = keep - cfg.step;
      const double lm = loss_value();
      w[i] = keep;
      const double fd = (lp - lm) / (2.0 * cfg.step);
      const double ad = grads[p][i];
      const double denom = std::max({1e-8, std::fabs(fd), std::fabs(ad)});
      rep.max_rel_err = std::max(rep.max_rel_err, std::fabs(fd - ad) / denom);
      ++rep.elements_checked;
    }
  }
  return rep;
}

} // namespace vinet::nn
