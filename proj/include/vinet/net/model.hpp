#pragma once

// The amortized posterior map d -> (u_p, a, alpha, beta): a denoising front
// end (DNet, tiny U-Net), per-sensor noise heads (SNet, DnCNN-style stack),
// a fixed precomputed coarse classical inversion layer (CECInv: truncated-SVD
// for the smoothing model, per-frequency Landweber stages for Helmholtz), and
// an enhancing operator network (ENet: U-Net with rescale layers, or a
// Fourier-mode variant), composed as u_p = ENet(CECInv(DNet(d))).

#include <Eigen/Dense>

#include <memory>
#include <string>
#include <vector>

#include "vinet/data.hpp"
#include "vinet/grid.hpp"
#include "vinet/nn/layers.hpp"
#include "vinet/nn/tape.hpp"
#include "vinet/rng.hpp"

namespace vinet::net {

using nn::ParamList;
using nn::Tape;
using nn::Tensor;
using nn::Value;

// Bilinear rescale between node arrays viewed on [0,1]^2 (the "rescale
// layer"); identity pass-through when the shapes already match.
Value rescale2d(Tape& t, Value x, int H, int W);

// out = M * flat(x); fixed matrix, exact linear layer.
Value matmul_fixed(Tape& t, Value x, std::shared_ptr<const Eigen::MatrixXd> M,
                   std::vector<int> out_shape);

struct DNet {
  int width = 16;
  nn::Conv2d e1a, e1b, e2a, e2b, e3a, e3b, d1a, d1b, d2a, d2b, head;

  void build(int w, Rng& rng);
  // (1,h,w) -> {d_hat (1,h,w), aux log-variance channel (1,h,w)}
  std::pair<Value, Value> forward(Tape& t, Value d_img);
  void params(ParamList& out, const std::string& name);
};

struct SNet {
  int width = 16;
  std::vector<nn::Conv2d> stack;  // five conv layers

  void build(int w, Rng& rng);
  // (1,h,w) -> {alpha (N_d), beta (N_d)} with alpha > 1, beta > 0 by transform
  std::pair<Value, Value> forward(Tape& t, Value d_img);
  void params(ParamList& out, const std::string& name);
};

struct UENet {
  int width = 16;
  int internal = 64;  // fixed internal mesh (pool-friendly)
  int in_channels = 2;
  nn::Conv2d e1a, e1b, e2a, e2b, e3a, e3b, e4a, e4b;
  nn::Conv2d d1a, d1b, d2a, d2b, d3a, d3b, head;

  void build(int in_ch, int w, int internal_n, Rng& rng);
  // input channels on arbitrary grids are rescaled in; output is raw
  // (2, out_n, out_n) after the output rescale layer
  Value forward(Tape& t, const std::vector<Value>& channels, int out_n);
  void params(ParamList& out, const std::string& name);
};

struct FnoENet {
  int width = 24;
  int modes = 8;
  int in_channels = 2;
  nn::ChannelLinear lift, q1, q2;
  std::vector<nn::SpectralConv> spectral;
  std::vector<nn::ChannelLinear> pointwise;

  void build(int in_ch, int w, int m, Rng& rng);
  Value forward(Tape& t, const std::vector<Value>& channels, int out_n);
  void params(ParamList& out, const std::string& name);
};

struct CecInv {
  grid::Grid coarse;
  // one dense sub-inverse per output channel; channel j consumes
  // d[offset_j : offset_j + len_j]
  std::vector<std::shared_ptr<const Eigen::MatrixXd>> blocks;
  std::vector<std::size_t> offsets, lengths;

  std::size_t channels() const { return blocks.size(); }
  // flat data vector value -> (channels, nc, nc)
  Value apply(Tape& t, Value d_flat) const;
};

CecInv build_cec_elliptic(const data::DatasetConfig& dcfg, int coarse_n, int rank,
                          int oversample, double lambda_rel, std::uint64_t seed);
CecInv build_cec_helmholtz(const data::DatasetConfig& dcfg, int coarse_n,
                           const std::vector<double>& cec_kappas, int inner,
                           std::uint64_t seed);

struct VINetConfig {
  std::string enet = "unet";  // "unet" | "fno"
  int dnet_width = 16;
  int snet_width = 16;
  int unet_width = 16;
  int unet_internal = 64;
  int fno_width = 24;
  int fno_modes = 8;
  // covariance parametrization bounds (positivity transforms enforce them)
  double a_min = 0.5;
  double a_max = 20.0;
  double delta = 0.2;
  double eps0_inv = 5.0;  // prior coefficient c = eps0^{-1}
  // CECInv
  int cec_n = 17;
  int cec_rank = 60;
  int cec_oversample = 10;
  double cec_lambda_rel = 0.1;  // cut relative to lambda_1 (smoothing model)
  std::vector<double> cec_kappas;  // helmholtz stages (default: full schedule)
  int cec_inner = 3;
  std::uint64_t cec_seed = 20240501;
  std::uint64_t init_seed = 1;

  nlohmann::json to_json() const;
  static VINetConfig from_json(const nlohmann::json& j);
};

class VINet {
 public:
  VINet(const VINetConfig& cfg, const data::DatasetConfig& dcfg);

  const VINetConfig& config() const { return cfg_; }
  const data::DatasetConfig& data_config() const { return dcfg_; }
  int data_h() const { return data_h_; }
  int data_w() const { return data_w_; }
  std::size_t data_dim() const { return static_cast<std::size_t>(data_h_) * data_w_; }

  Value data_image(Tape& t, const std::vector<double>& d) const;

  std::pair<Value, Value> snet_forward(Tape& t, Value d_img) { return snet.forward(t, d_img); }
  std::pair<Value, Value> dnet_forward(Tape& t, Value d_img) { return dnet.forward(t, d_img); }
  Value cecinv_apply(Tape& t, Value d_hat_img) const;

  struct INetOut {
    Value mean;  // (out_n * out_n)
    Value a;     // (out_n * out_n), in (a_min, a_max)
  };
  INetOut inet_forward(Tape& t, Value d_img, int out_n);

  ParamList inet_params();  // DNet + ENet
  ParamList snet_params();
  ParamList all_params();

  void save(const std::string& path_base);
  void load(const std::string& path_base);

  DNet dnet;
  SNet snet;
  UENet uenet;
  FnoENet fno;
  CecInv cec;

 private:
  VINetConfig cfg_;
  data::DatasetConfig dcfg_;
  int data_h_ = 0, data_w_ = 0;
};

} // namespace vinet::net
