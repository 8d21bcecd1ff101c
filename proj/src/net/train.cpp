#include "vinet/net/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "vinet/errors.hpp"
#include "vinet/kernels.hpp"
#include "vinet/nn/adam.hpp"
#include "vinet/prior.hpp"

namespace vinet::net {

nlohmann::json TrainConfig::to_json() const {
  return nlohmann::json{{"stage1_epochs", stage1_epochs}, {"stage2_epochs", stage2_epochs},
                        {"lr", lr},                       {"lr_halve_every", lr_halve_every},
                        {"batch", batch},                 {"seed", seed},
                        {"ig0_alpha", ig0_alpha},         {"ig0_beta", ig0_beta}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.stage1_epochs = j.value("stage1_epochs", c.stage1_epochs);
  c.stage2_epochs = j.value("stage2_epochs", c.stage2_epochs);
  c.lr = j.value("lr", c.lr);
  c.lr_halve_every = j.value("lr_halve_every", c.lr_halve_every);
  c.batch = j.value("batch", c.batch);
  c.seed = j.value("seed", c.seed);
  c.ig0_alpha = j.value("ig0_alpha", c.ig0_alpha);
  c.ig0_beta = j.value("ig0_beta", c.ig0_beta);
  return c;
}

ElboContext make_context(const VINet& model, const TrainConfig& cfg) {
  const auto& dcfg = model.data_config();
  const auto g = grid::unit_square(dcfg.inv_n);
  auto H = data::make_inv_forward(dcfg);
  const std::size_t nd = H->data_dim();
  return ElboContext(g, std::move(H), model.config().eps0_inv, model.config().delta,
                     bayes::IGParams::constant(cfg.ig0_alpha, cfg.ig0_beta, nd));
}

namespace {

struct GradAccum {
  std::vector<Tensor> sums;

  explicit GradAccum(const ParamList& p) {
    for (const Tensor* t : p.tensors) sums.emplace_back(t->shape);
  }
  void add(Tape& tape, const ParamList& p) {
    for (std::size_t i = 0; i < p.tensors.size(); ++i) {
      const Tensor g = tape.grad_of(*p.tensors[i]);
      kernels::axpy(1.0, g.data.data(), sums[i].data.data(), g.numel());
    }
  }
  void scale(double c) {
    for (Tensor& t : sums) kernels::scal(c, t.data.data(), t.numel());
  }
  void reset() {
    for (Tensor& t : sums) std::fill(t.data.begin(), t.data.end(), 0.0);
  }
};

double lr_at(const TrainConfig& cfg, int epoch) {
  const int halvings = cfg.lr_halve_every > 0 ? epoch / cfg.lr_halve_every : 0;
  return cfg.lr * std::pow(0.5, halvings);
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform() * i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

} // namespace

TrainTrace train(VINet& model, const data::Dataset& ds, const TrainConfig& cfg) {
  TrainTrace trace;
  if (ds.items.empty() || (cfg.stage1_epochs == 0 && cfg.stage2_epochs == 0)) return trace;
  const ElboContext ctx = make_context(model, cfg);
  const auto inv_grid = ctx.inv_grid;

  // stage 1: DNet + SNet on the denoising objective
  {
    ParamList params;
    model.dnet.params(params, "dnet");
    model.snet.params(params, "snet");
    nn::Adam opt;
    GradAccum acc(params);
    for (int epoch = 0; epoch < cfg.stage1_epochs; ++epoch) {
      const double lr = lr_at(cfg, epoch);
      const auto order = epoch_order(ds.items.size(), child_seed(cfg.seed, 1000 + epoch));
      double epoch_loss = 0.0;
      int in_batch = 0;
      acc.reset();
      for (std::size_t pos = 0; pos < order.size(); ++pos) {
        const auto& item = ds.items[order[pos]];
        Tape t;
        Value d_img = model.data_image(t, item.d_noisy);
        auto [d_hat, logvar] = model.dnet_forward(t, d_img);
        (void)logvar;
        auto [alpha, beta] = model.snet_forward(t, d_img);
        Value loss = stage1_loss(t, d_hat, alpha, beta, item.d_noisy, item.d_clean, ctx);
        const double lv = t.value(loss)[0];
        if (!std::isfinite(lv))
          throw SolverError("train stage 1: non-finite loss at epoch " +
                            std::to_string(epoch) + ", item " + std::to_string(order[pos]));
        epoch_loss += lv;
        t.backward(loss);
        acc.add(t, params);
        if (++in_batch == cfg.batch || pos + 1 == order.size()) {
          acc.scale(1.0 / in_batch);
          opt.step(params.tensors, acc.sums, lr);
          acc.reset();
          in_batch = 0;
        }
      }
      trace.stage1_epoch_loss.push_back(epoch_loss / ds.items.size());
      if (cfg.verbose)
        std::printf("stage1 epoch %d loss %.6f\n", epoch, trace.stage1_epoch_loss.back());
    }
  }

  // stage 2: ENet + SNet on the negative ELBO, DNet frozen
  {
    ParamList params;
    if (model.config().enet == "unet")
      model.uenet.params(params, "uenet");
    else
      model.fno.params(params, "fno");
    model.snet.params(params, "snet");
    nn::Adam opt;
    GradAccum acc(params);
    for (int epoch = 0; epoch < cfg.stage2_epochs; ++epoch) {
      const double lr = lr_at(cfg, epoch);
      const auto order = epoch_order(ds.items.size(), child_seed(cfg.seed, 2000 + epoch));
      double epoch_loss = 0.0;
      int in_batch = 0;
      acc.reset();
      for (std::size_t pos = 0; pos < order.size(); ++pos) {
        const std::size_t idx = order[pos];
        const auto& item = ds.items[idx];
        Tape t;
        Value d_img = model.data_image(t, item.d_noisy);
        auto out = model.inet_forward(t, d_img, inv_grid.nx);
        auto [alpha, beta] = model.snet_forward(t, d_img);
        const grid::GridFunction u0 = grid::rescale(item.u_truth, inv_grid);
        Rng eta_rng(child_seed(child_seed(cfg.seed, 3000 + epoch), idx));
        const grid::GridFunction eta = prior::white_noise(inv_grid, eta_rng);
        Value loss = elbo_loss(t, out.mean, out.a, alpha, beta, item.d_noisy, u0, eta, ctx);
        const double lv = t.value(loss)[0];
        if (!std::isfinite(lv))
          throw SolverError("train stage 2: non-finite loss at epoch " +
                            std::to_string(epoch) + ", item " + std::to_string(idx));
        epoch_loss += lv;
        t.backward(loss);
        acc.add(t, params);
        if (++in_batch == cfg.batch || pos + 1 == order.size()) {
          acc.scale(1.0 / in_batch);
          opt.step(params.tensors, acc.sums, lr);
          acc.reset();
          in_batch = 0;
        }
      }
      trace.stage2_epoch_loss.push_back(epoch_loss / ds.items.size());
      if (cfg.verbose)
        std::printf("stage2 epoch %d loss %.6f\n", epoch, trace.stage2_epoch_loss.back());
    }
  }
  return trace;
}

PosteriorSummary infer(VINet& model, const std::vector<double>& d,
                       const grid::Grid& out_grid) {
  if (out_grid.nx != out_grid.ny)
    throw std::invalid_argument("infer: output grid must be square");
  Tape t;
  Value d_img = model.data_image(t, d);
  auto out = model.inet_forward(t, d_img, out_grid.nx);
  auto [alpha, beta] = model.snet_forward(t, d_img);

  PosteriorSummary s;
  s.mean = grid::GridFunction(out_grid, t.value(out.mean).data);
  s.a = grid::GridFunction(out_grid, t.value(out.a).data);
  const stencil::Factor Mp(s.a, model.config().delta);
  std::vector<double> var = Mp.pointwise_variance();
  for (double& v : var) v = std::sqrt(v);
  s.pointwise_std = grid::GridFunction(out_grid, std::move(var));
  s.sigma_alpha = t.value(alpha).data;
  s.sigma_beta = t.value(beta).data;
  s.noise_variance_estimate.resize(s.sigma_alpha.size());
  for (std::size_t i = 0; i < s.sigma_alpha.size(); ++i)
    s.noise_variance_estimate[i] = s.sigma_beta[i] / (s.sigma_alpha[i] - 1.0);
  return s;
}

} // namespace vinet::net
