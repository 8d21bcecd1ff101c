#include "vinet/net/model.hpp"

#include <cmath>
#include <fstream>

#include "vinet/classical.hpp"
#include "vinet/errors.hpp"
#include "vinet/prior.hpp"

namespace vinet::net {

// ---------------------------------------------------------------------------
// rescale / fixed-matrix ops
// ---------------------------------------------------------------------------

Value rescale2d(Tape& t, Value x, int H, int W) {
  const Tensor& vx = t.value(x);
  if (vx.rank() != 3) throw std::invalid_argument("rescale2d: expected (C,H,W)");
  const int C = vx.dim(0), h = vx.dim(1), w = vx.dim(2);
  if (h == H && w == W) return x;
  if (h < 2 || w < 2) throw std::invalid_argument("rescale2d: source too small");

  // per-target-node bilinear stencil on [0,1]^2 node coordinates
  struct Stencil {
    int i0, j0;
    double tx, ty;
  };
  auto stencils = std::make_shared<std::vector<Stencil>>();
  stencils->reserve(static_cast<std::size_t>(H) * W);
  for (int I = 0; I < H; ++I) {
    const double sx = (h - 1) * (H == 1 ? 0.0 : static_cast<double>(I) / (H - 1));
    int i0 = std::min(static_cast<int>(sx), h - 2);
    for (int J = 0; J < W; ++J) {
      const double sy = (w - 1) * (W == 1 ? 0.0 : static_cast<double>(J) / (W - 1));
      int j0 = std::min(static_cast<int>(sy), w - 2);
      stencils->push_back({i0, j0, sx - i0, sy - j0});
    }
  }

  Tensor out({C, H, W});
  for (int c = 0; c < C; ++c) {
    const double* src = vx.data.data() + static_cast<std::size_t>(c) * h * w;
    double* dst = out.data.data() + static_cast<std::size_t>(c) * H * W;
    for (std::size_t k = 0; k < stencils->size(); ++k) {
      const Stencil& s = (*stencils)[k];
      const double v00 = src[s.i0 * w + s.j0], v10 = src[(s.i0 + 1) * w + s.j0];
      const double v01 = src[s.i0 * w + s.j0 + 1], v11 = src[(s.i0 + 1) * w + s.j0 + 1];
      dst[k] = (1 - s.tx) * (1 - s.ty) * v00 + s.tx * (1 - s.ty) * v10 +
               (1 - s.tx) * s.ty * v01 + s.tx * s.ty * v11;
    }
  }
  return t.make_node(std::move(out), {x},
                     [x, stencils, C, h, w, H, W](Tape& tp, const Tensor& g) {
    Tensor gx(tp.value(x).shape);
    for (int c = 0; c < C; ++c) {
      double* dst = gx.data.data() + static_cast<std::size_t>(c) * h * w;
      const double* gsrc = g.data.data() + static_cast<std::size_t>(c) * H * W;
      for (std::size_t k = 0; k < stencils->size(); ++k) {
        const Stencil& s = (*stencils)[k];
        const double gv = gsrc[k];
        dst[s.i0 * w + s.j0] += (1 - s.tx) * (1 - s.ty) * gv;
        dst[(s.i0 + 1) * w + s.j0] += s.tx * (1 - s.ty) * gv;
        dst[s.i0 * w + s.j0 + 1] += (1 - s.tx) * s.ty * gv;
        dst[(s.i0 + 1) * w + s.j0 + 1] += s.tx * s.ty * gv;
      }
    }
    tp.accumulate(x, gx);
  });
}

Value matmul_fixed(Tape& t, Value x, std::shared_ptr<const Eigen::MatrixXd> M,
                   std::vector<int> out_shape) {
  const Tensor& vx = t.value(x);
  if (static_cast<Eigen::Index>(vx.numel()) != M->cols())
    throw std::invalid_argument("matmul_fixed: dimension mismatch");
  const Eigen::Map<const Eigen::VectorXd> xv(vx.data.data(),
                                             static_cast<Eigen::Index>(vx.numel()));
  const Eigen::VectorXd y = (*M) * xv;
  if (Tensor::count(out_shape) != static_cast<std::size_t>(y.size()))
    throw std::invalid_argument("matmul_fixed: output shape mismatch");
  Tensor out(std::move(out_shape), std::vector<double>(y.data(), y.data() + y.size()));
  return t.make_node(std::move(out), {x}, [x, M](Tape& tp, const Tensor& g) {
    const Eigen::Map<const Eigen::VectorXd> gv(g.data.data(),
                                               static_cast<Eigen::Index>(g.numel()));
    const Eigen::VectorXd gx = M->transpose() * gv;
    tp.accumulate(x, Tensor(tp.value(x).shape,
                            std::vector<double>(gx.data(), gx.data() + gx.size())));
  });
}

// ---------------------------------------------------------------------------
// DNet
// ---------------------------------------------------------------------------

void DNet::build(int w, Rng& rng) {
  width = w;
  e1a = nn::Conv2d(1, w);
  e1b = nn::Conv2d(w, w);
  e2a = nn::Conv2d(w, 2 * w);
  e2b = nn::Conv2d(2 * w, 2 * w);
  e3a = nn::Conv2d(2 * w, 2 * w);
  e3b = nn::Conv2d(2 * w, 2 * w);
  d1a = nn::Conv2d(4 * w, 2 * w);
  d1b = nn::Conv2d(2 * w, w);
  d2a = nn::Conv2d(2 * w, w);
  d2b = nn::Conv2d(w, w);
  head = nn::Conv2d(w, 2);
  for (nn::Conv2d* c : {&e1a, &e1b, &e2a, &e2b, &e3a, &e3b, &d1a, &d1b, &d2a, &d2b})
    c->init(rng);
  head.init_zero();  // residual identity at initialization
}

std::pair<Value, Value> DNet::forward(Tape& t, Value d_img) {
  Value x1 = nn::relu(t, e1b.forward(t, nn::relu(t, e1a.forward(t, d_img))));
  Value p1 = nn::avgpool2(t, x1);
  Value x2 = nn::relu(t, e2b.forward(t, nn::relu(t, e2a.forward(t, p1))));
  Value p2 = nn::avgpool2(t, x2);
  Value x3 = nn::relu(t, e3b.forward(t, nn::relu(t, e3a.forward(t, p2))));
  Value u1 = nn::concat_channels(t, {nn::upsample2(t, x3), x2});
  Value y1 = nn::relu(t, d1b.forward(t, nn::relu(t, d1a.forward(t, u1))));
  Value u2 = nn::concat_channels(t, {nn::upsample2(t, y1), x1});
  Value y2 = nn::relu(t, d2b.forward(t, nn::relu(t, d2a.forward(t, u2))));
  Value out = head.forward(t, y2);
  Value corr = nn::slice_channels(t, out, 0, 1);
  Value logvar = nn::slice_channels(t, out, 1, 1);
  Value d_hat = nn::add(t, d_img, corr);
  return {d_hat, logvar};
}

void DNet::params(ParamList& out, const std::string& name) {
  e1a.params(out, name + ".e1a");
  e1b.params(out, name + ".e1b");
  e2a.params(out, name + ".e2a");
  e2b.params(out, name + ".e2b");
  e3a.params(out, name + ".e3a");
  e3b.params(out, name + ".e3b");
  d1a.params(out, name + ".d1a");
  d1b.params(out, name + ".d1b");
  d2a.params(out, name + ".d2a");
  d2b.params(out, name + ".d2b");
  head.params(out, name + ".head");
}

// ---------------------------------------------------------------------------
// SNet
// ---------------------------------------------------------------------------

void SNet::build(int w, Rng& rng) {
  width = w;
  stack.clear();
  stack.emplace_back(1, w);
  stack.emplace_back(w, w);
  stack.emplace_back(w, w);
  stack.emplace_back(w, w);
  stack.emplace_back(w, 2);
  for (auto& c : stack) c.init(rng);
}

std::pair<Value, Value> SNet::forward(Tape& t, Value d_img) {
  Value x = d_img;
  for (std::size_t i = 0; i + 1 < stack.size(); ++i)
    x = nn::relu(t, stack[i].forward(t, x));
  Value out = stack.back().forward(t, x);
  const Tensor& vo = t.value(out);
  const int n = vo.dim(1) * vo.dim(2);
  Value raw_a = nn::reshape(t, nn::slice_channels(t, out, 0, 1), {n});
  Value raw_b = nn::reshape(t, nn::slice_channels(t, out, 1, 1), {n});
  // alpha > 1 (finite mean) and beta > 0 guaranteed by construction
  Value alpha = nn::add_scalar(t, nn::softplus(t, raw_a), 1.0 + 1e-3);
  Value beta = nn::add_scalar(t, nn::softplus(t, raw_b), 1e-6);
  return {alpha, beta};
}

void SNet::params(ParamList& out, const std::string& name) {
  for (std::size_t i = 0; i < stack.size(); ++i)
    stack[i].params(out, name + ".conv" + std::to_string(i));
}

// ---------------------------------------------------------------------------
// U-ENet with rescale layers
// ---------------------------------------------------------------------------

void UENet::build(int in_ch, int w, int internal_n, Rng& rng) {
  width = w;
  internal = internal_n;
  in_channels = in_ch;
  e1a = nn::Conv2d(in_ch, w);
  e1b = nn::Conv2d(w, w);
  e2a = nn::Conv2d(w, 2 * w);
  e2b = nn::Conv2d(2 * w, 2 * w);
  e3a = nn::Conv2d(2 * w, 2 * w);
  e3b = nn::Conv2d(2 * w, 2 * w);
  e4a = nn::Conv2d(2 * w, 2 * w);
  e4b = nn::Conv2d(2 * w, 2 * w);
  d1a = nn::Conv2d(4 * w, 2 * w);
  d1b = nn::Conv2d(2 * w, 2 * w);
  d2a = nn::Conv2d(4 * w, 2 * w);
  d2b = nn::Conv2d(2 * w, w);
  d3a = nn::Conv2d(2 * w, w);
  d3b = nn::Conv2d(w, w);
  head = nn::Conv2d(w, 2);
  for (nn::Conv2d* c :
       {&e1a, &e1b, &e2a, &e2b, &e3a, &e3b, &e4a, &e4b, &d1a, &d1b, &d2a, &d2b, &d3a, &d3b})
    c->init(rng);
  head.init(rng);
}

Value UENet::forward(Tape& t, const std::vector<Value>& channels, int out_n) {
  std::vector<Value> resc;
  resc.reserve(channels.size());
  for (Value c : channels) resc.push_back(rescale2d(t, c, internal, internal));
  Value x = nn::concat_channels(t, resc);

  Value x1 = nn::relu(t, e1b.forward(t, nn::relu(t, e1a.forward(t, x))));
  Value p1 = nn::avgpool2(t, x1);
  Value x2 = nn::relu(t, e2b.forward(t, nn::relu(t, e2a.forward(t, p1))));
  Value p2 = nn::avgpool2(t, x2);
  Value x3 = nn::relu(t, e3b.forward(t, nn::relu(t, e3a.forward(t, p2))));
  Value p3 = nn::avgpool2(t, x3);
  Value x4 = nn::relu(t, e4b.forward(t, nn::relu(t, e4a.forward(t, p3))));

  Value u1 = nn::concat_channels(t, {nn::upsample2(t, x4), x3});
  Value y1 = nn::relu(t, d1b.forward(t, nn::relu(t, d1a.forward(t, u1))));
  Value u2 = nn::concat_channels(t, {nn::upsample2(t, y1), x2});
  Value y2 = nn::relu(t, d2b.forward(t, nn::relu(t, d2a.forward(t, u2))));
  Value u3 = nn::concat_channels(t, {nn::upsample2(t, y2), x1});
  Value y3 = nn::relu(t, d3b.forward(t, nn::relu(t, d3a.forward(t, u3))));
  Value raw = head.forward(t, y3);
  return rescale2d(t, raw, out_n, out_n);
}

void UENet::params(ParamList& out, const std::string& name) {
  e1a.params(out, name + ".e1a");
  e1b.params(out, name + ".e1b");
  e2a.params(out, name + ".e2a");
  e2b.params(out, name + ".e2b");
  e3a.params(out, name + ".e3a");
  e3b.params(out, name + ".e3b");
  e4a.params(out, name + ".e4a");
  e4b.params(out, name + ".e4b");
  d1a.params(out, name + ".d1a");
  d1b.params(out, name + ".d1b");
  d2a.params(out, name + ".d2a");
  d2b.params(out, name + ".d2b");
  d3a.params(out, name + ".d3a");
  d3b.params(out, name + ".d3b");
  head.params(out, name + ".head");
}

// ---------------------------------------------------------------------------
// FNO-ENet
// ---------------------------------------------------------------------------

void FnoENet::build(int in_ch, int w, int m, Rng& rng) {
  width = w;
  modes = m;
  in_channels = in_ch;
  lift = nn::ChannelLinear(in_ch, w);
  lift.init(rng);
  spectral.clear();
  pointwise.clear();
  for (int i = 0; i < 4; ++i) {
    spectral.emplace_back(w, w, m);
    spectral.back().init(rng);
    pointwise.emplace_back(w, w);
    pointwise.back().init(rng);
  }
  q1 = nn::ChannelLinear(w, w);
  q1.init(rng);
  q2 = nn::ChannelLinear(w, 2);
  q2.init(rng);
}

Value FnoENet::forward(Tape& t, const std::vector<Value>& channels, int out_n) {
  std::vector<Value> resc;
  resc.reserve(channels.size());
  for (Value c : channels) resc.push_back(rescale2d(t, c, out_n, out_n));
  Value v = lift.forward(t, nn::concat_channels(t, resc));
  for (std::size_t i = 0; i < spectral.size(); ++i) {
    Value mixed = nn::add(t, spectral[i].forward(t, v), pointwise[i].forward(t, v));
    v = (i + 1 < spectral.size()) ? nn::relu(t, mixed) : mixed;
  }
  return q2.forward(t, nn::relu(t, q1.forward(t, v)));
}

void FnoENet::params(ParamList& out, const std::string& name) {
  lift.params(out, name + ".lift");
  for (std::size_t i = 0; i < spectral.size(); ++i) {
    spectral[i].params(out, name + ".spec" + std::to_string(i));
    pointwise[i].params(out, name + ".w" + std::to_string(i));
  }
  q1.params(out, name + ".q1");
  q2.params(out, name + ".q2");
}

// ---------------------------------------------------------------------------
// CECInv
// ---------------------------------------------------------------------------

Value CecInv::apply(Tape& t, Value d_flat) const {
  std::vector<Value> fields;
  fields.reserve(blocks.size());
  const int nc = coarse.nx;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    Value block = nn::reshape(
        t, nn::slice_flat(t, d_flat, offsets[b], lengths[b]),
        {static_cast<int>(lengths[b])});
    fields.push_back(matmul_fixed(t, block, blocks[b], {1, nc, nc}));
  }
  return fields.size() == 1 ? fields[0] : nn::concat_channels(t, fields);
}

CecInv build_cec_elliptic(const data::DatasetConfig& dcfg, int coarse_n, int rank,
                          int oversample, double lambda_rel, std::uint64_t seed) {
  CecInv cec;
  cec.coarse = grid::unit_square(coarse_n);
  const auto Hc = std::make_shared<forward::EllipticForward>(
      dcfg.alpha_pde, cec.coarse, forward::SensorSet::lattice(dcfg.sensor_lattice));
  const auto action = [&](const grid::GridFunction& f) { return Hc->adjoint(Hc->apply(f)); };
  Rng rng(seed);
  const auto eig = classical::randomized_eig(action, cec.coarse, rank, oversample, rng);
  if (eig.values.empty()) throw SolverError("build_cec_elliptic: empty spectrum");
  const double cut = lambda_rel * eig.values[0];

  // M = sum_{lam_k >= cut} (1/lam_k) v_k (H v_k)^T  (tsvd as one dense matrix)
  const std::size_t n = cec.coarse.size();
  auto M = std::make_shared<Eigen::MatrixXd>(
      Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                            static_cast<Eigen::Index>(Hc->data_dim())));
  for (std::size_t k = 0; k < eig.values.size(); ++k) {
    if (eig.values[k] < cut) break;
    const std::vector<double> hv = Hc->apply(eig.vectors[k]);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < hv.size(); ++j)
        (*M)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) +=
            eig.vectors[k].values[i] * hv[j] / eig.values[k];
  }
  cec.blocks.push_back(M);
  cec.offsets.push_back(0);
  cec.lengths.push_back(Hc->data_dim());
  return cec;
}

CecInv build_cec_helmholtz(const data::DatasetConfig& dcfg, int coarse_n,
                           const std::vector<double>& cec_kappas, int inner,
                           std::uint64_t seed) {
  CecInv cec;
  cec.coarse = grid::unit_square(coarse_n);
  const std::size_t block = 2 * static_cast<std::size_t>(dcfg.boundary_sensors);
  Rng rng(seed);
  for (double kappa : cec_kappas) {
    // position of this stage inside the full data layout
    std::size_t pos = 0;
    bool found = false;
    for (std::size_t j = 0; j < dcfg.kappas.size(); ++j)
      if (dcfg.kappas[j] == kappa) {
        pos = j;
        found = true;
        break;
      }
    if (!found) throw ConfigError("cec: stage kappa not in the dataset schedule");

    const forward::HelmholtzForward Hk(cec.coarse, {kappa}, dcfg.pml,
                                       forward::SensorSet::boundary(dcfg.boundary_sensors));
    // tau from 30-step power iteration on Hk* Hk
    grid::GridFunction x = prior::white_noise(cec.coarse, rng);
    double lam = 1.0;
    for (int it = 0; it < 30; ++it) {
      const double nx = grid::norm_l2(x);
      for (double& v : x.values) v /= nx;
      grid::GridFunction y = Hk.adjoint(Hk.apply(x));
      lam = grid::inner_l2(x, y);
      x = std::move(y);
    }
    const double tau = 0.9 / lam;

    // assemble the linear map of `inner` Landweber steps from zero
    const std::size_t n = cec.coarse.size();
    auto M = std::make_shared<Eigen::MatrixXd>(
        Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                              static_cast<Eigen::Index>(block)));
    std::vector<double> e(block, 0.0);
    for (std::size_t col = 0; col < block; ++col) {
      e.assign(block, 0.0);
      e[col] = 1.0;
      grid::GridFunction u(cec.coarse);
      for (int it = 0; it < inner; ++it) {
        std::vector<double> r = Hk.apply(u);
        for (std::size_t i = 0; i < r.size(); ++i) r[i] = e[i] - r[i];
        const grid::GridFunction g = Hk.adjoint(r);
        for (std::size_t i = 0; i < n; ++i) u.values[i] += tau * g.values[i];
      }
      for (std::size_t i = 0; i < n; ++i)
        (*M)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col)) = u.values[i];
    }
    cec.blocks.push_back(M);
    cec.offsets.push_back(pos * block);
    cec.lengths.push_back(block);
  }
  return cec;
}

// ---------------------------------------------------------------------------
// VINet
// ---------------------------------------------------------------------------

nlohmann::json VINetConfig::to_json() const {
  return nlohmann::json{{"enet", enet},
                        {"dnet_width", dnet_width},
                        {"snet_width", snet_width},
                        {"unet_width", unet_width},
                        {"unet_internal", unet_internal},
                        {"fno_width", fno_width},
                        {"fno_modes", fno_modes},
                        {"a_min", a_min},
                        {"a_max", a_max},
                        {"delta", delta},
                        {"eps0_inv", eps0_inv},
                        {"cec_n", cec_n},
                        {"cec_rank", cec_rank},
                        {"cec_oversample", cec_oversample},
                        {"cec_lambda_rel", cec_lambda_rel},
                        {"cec_kappas", cec_kappas},
                        {"cec_inner", cec_inner},
                        {"cec_seed", cec_seed},
                        {"init_seed", init_seed}};
}

VINetConfig VINetConfig::from_json(const nlohmann::json& j) {
  VINetConfig c;
  c.enet = j.value("enet", c.enet);
  c.dnet_width = j.value("dnet_width", c.dnet_width);
  c.snet_width = j.value("snet_width", c.snet_width);
  c.unet_width = j.value("unet_width", c.unet_width);
  c.unet_internal = j.value("unet_internal", c.unet_internal);
  c.fno_width = j.value("fno_width", c.fno_width);
  c.fno_modes = j.value("fno_modes", c.fno_modes);
  c.a_min = j.value("a_min", c.a_min);
  c.a_max = j.value("a_max", c.a_max);
  c.delta = j.value("delta", c.delta);
  c.eps0_inv = j.value("eps0_inv", c.eps0_inv);
  c.cec_n = j.value("cec_n", c.cec_n);
  c.cec_rank = j.value("cec_rank", c.cec_rank);
  c.cec_oversample = j.value("cec_oversample", c.cec_oversample);
  c.cec_lambda_rel = j.value("cec_lambda_rel", c.cec_lambda_rel);
  if (j.contains("cec_kappas")) c.cec_kappas = j.at("cec_kappas").get<std::vector<double>>();
  c.cec_inner = j.value("cec_inner", c.cec_inner);
  c.cec_seed = j.value("cec_seed", c.cec_seed);
  c.init_seed = j.value("init_seed", c.init_seed);
  return c;
}

VINet::VINet(const VINetConfig& cfg, const data::DatasetConfig& dcfg)
    : cfg_(cfg), dcfg_(dcfg) {
  const auto [dh, dw] = data::data_image_shape(dcfg);
  data_h_ = dh;
  data_w_ = dw;
  if (dh % 4 != 0 || dw % 4 != 0)
    throw ConfigError("VINet: data image extents must be divisible by 4 for the DNet pools");
  if (!(cfg.a_min > 0.0) || !(cfg.a_max > cfg.a_min))
    throw ConfigError("VINet: need 0 < a_min < a_max");

  Rng rng(cfg.init_seed);
  dnet.build(cfg.dnet_width, rng);
  snet.build(cfg.snet_width, rng);

  if (dcfg.experiment == "elliptic") {
    cec = build_cec_elliptic(dcfg, cfg.cec_n, cfg.cec_rank, cfg.cec_oversample,
                             cfg.cec_lambda_rel, cfg.cec_seed);
  } else {
    std::vector<double> stages = cfg.cec_kappas.empty() ? dcfg.kappas : cfg.cec_kappas;
    cec = build_cec_helmholtz(dcfg, cfg.cec_n, stages, cfg.cec_inner, cfg.cec_seed);
  }

  const int enet_in = static_cast<int>(cec.channels()) + 1;  // + DNet variance channel
  if (cfg.enet == "unet")
    uenet.build(enet_in, cfg.unet_width, cfg.unet_internal, rng);
  else if (cfg.enet == "fno")
    fno.build(enet_in, cfg.fno_width, cfg.fno_modes, rng);
  else
    throw ConfigError("VINet: unknown enet kind '" + cfg.enet + "'");
}

Value VINet::data_image(Tape& t, const std::vector<double>& d) const {
  if (d.size() != data_dim()) throw std::invalid_argument("data_image: layout mismatch");
  return t.constant(Tensor({1, data_h_, data_w_}, d));
}

Value VINet::cecinv_apply(Tape& t, Value d_hat_img) const {
  const Tensor& v = t.value(d_hat_img);
  Value flat = nn::reshape(t, d_hat_img, {static_cast<int>(v.numel())});
  return cec.apply(t, flat);
}

VINet::INetOut VINet::inet_forward(Tape& t, Value d_img, int out_n) {
  auto [d_hat, logvar] = dnet.forward(t, d_img);
  Value coarse = cecinv_apply(t, d_hat);
  std::vector<Value> channels;
  for (std::size_t c = 0; c < cec.channels(); ++c)
    channels.push_back(nn::slice_channels(t, coarse, static_cast<int>(c), 1));
  channels.push_back(logvar);

  Value raw = (cfg_.enet == "unet") ? uenet.forward(t, channels, out_n)
                                    : fno.forward(t, channels, out_n);
  Value mean = nn::reshape(t, nn::slice_channels(t, raw, 0, 1), {out_n * out_n});
  Value raw_a = nn::reshape(t, nn::slice_channels(t, raw, 1, 1), {out_n * out_n});
  Value a = nn::add_scalar(t, nn::scale(t, nn::sigmoid(t, raw_a), cfg_.a_max - cfg_.a_min),
                           cfg_.a_min);
  return {mean, a};
}

ParamList VINet::inet_params() {
  ParamList p;
  dnet.params(p, "dnet");
  if (cfg_.enet == "unet")
    uenet.params(p, "uenet");
  else
    fno.params(p, "fno");
  return p;
}

ParamList VINet::snet_params() {
  ParamList p;
  snet.params(p, "snet");
  return p;
}

ParamList VINet::all_params() {
  ParamList p = inet_params();
  snet.params(p, "snet");
  return p;
}

void VINet::save(const std::string& path_base) {
  ParamList p = all_params();
  nlohmann::json manifest;
  manifest["config"] = cfg_.to_json();
  manifest["data_config"] = dcfg_.to_json();
  nlohmann::json layers = nlohmann::json::array();
  std::size_t offset = 0;
  std::ofstream blob(path_base + ".params", std::ios::binary | std::ios::trunc);
  if (!blob) throw std::runtime_error("VINet::save: cannot open " + path_base + ".params");
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    const Tensor& w = *p.tensors[i];
    layers.push_back(nlohmann::json{
        {"name", p.names[i]}, {"shape", w.shape}, {"offset", offset}, {"count", w.numel()}});
    blob.write(reinterpret_cast<const char*>(w.data.data()),
               static_cast<std::streamsize>(w.numel() * sizeof(double)));
    offset += w.numel();
  }
  manifest["params"] = layers;
  std::ofstream mf(path_base + ".json", std::ios::trunc);
  mf << manifest.dump(2) << "\n";
}

void VINet::load(const std::string& path_base) {
  std::ifstream mf(path_base + ".json");
  if (!mf) throw std::runtime_error("VINet::load: missing manifest " + path_base + ".json");
  const nlohmann::json manifest = nlohmann::json::parse(mf);
  ParamList p = all_params();
  std::ifstream blob(path_base + ".params", std::ios::binary);
  if (!blob) throw std::runtime_error("VINet::load: missing blob " + path_base + ".params");
  const auto& layers = manifest.at("params");
  if (layers.size() != p.tensors.size())
    throw std::runtime_error("VINet::load: parameter count mismatch");
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    const auto& L = layers[i];
    if (L.at("name").get<std::string>() != p.names[i])
      throw std::runtime_error("VINet::load: layer name mismatch at " + p.names[i]);
    Tensor& w = *p.tensors[i];
    if (L.at("count").get<std::size_t>() != w.numel())
      throw std::runtime_error("VINet::load: size mismatch at " + p.names[i]);
    blob.seekg(static_cast<std::streamoff>(L.at("offset").get<std::size_t>() *
                                           sizeof(double)));
    blob.read(reinterpret_cast<char*>(w.data.data()),
              static_cast<std::streamsize>(w.numel() * sizeof(double)));
  }
}

} // namespace vinet::net
