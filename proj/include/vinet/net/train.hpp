#pragma once

// Two-stage training (denoising/noise heads first, then the enhancing
// network against the full negative ELBO with DNet frozen) and single-pass
// inference.

#include "vinet/net/elbo.hpp"
#include "vinet/net/model.hpp"

namespace vinet::net {

struct TrainConfig {
  int stage1_epochs = 20;
  int stage2_epochs = 15;
  double lr = 1e-3;
  int lr_halve_every = 10;
  int batch = 8;
  std::uint64_t seed = 0;
  double ig0_alpha = 2.0;
  double ig0_beta = 0.01;
  bool verbose = false;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct TrainTrace {
  std::vector<double> stage1_epoch_loss;
  std::vector<double> stage2_epoch_loss;
};

ElboContext make_context(const VINet& model, const TrainConfig& cfg);

TrainTrace train(VINet& model, const data::Dataset& ds, const TrainConfig& cfg);

struct PosteriorSummary {
  grid::GridFunction mean;
  grid::GridFunction a;
  grid::GridFunction pointwise_std;
  std::vector<double> sigma_alpha;
  std::vector<double> sigma_beta;
  std::vector<double> noise_variance_estimate;  // beta / (alpha - 1)
};

// One forward pass; no iterations and no PDE solves beyond the fixed CECInv
// matrix products. The output grid must be square.
PosteriorSummary infer(VINet& model, const std::vector<double>& d,
                       const grid::Grid& out_grid);

} // namespace vinet::net
