#include "vinet/data.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "vinet/errors.hpp"
#include "vinet/prior.hpp"
#include "vinet/stencil_ops.hpp"

namespace vinet::data {

namespace fs = std::filesystem;

grid::GridFunction sample_grf_aniso(const grid::GridFunction& mean, double theta_x,
                                    double theta_y, double alpha_amp, Rng& rng) {
  if (!(theta_x > 0.0) || !(theta_y > 0.0) || !(alpha_amp > 0.0))
    throw std::invalid_argument("sample_grf_aniso: parameters must be positive");
  const grid::Grid& g = mean.grid;
  const grid::GridFunction a = grid::sample(g, [&](double, double) { return alpha_amp; });
  const stencil::Factor M(a, alpha_amp, theta_x, theta_y);
  const grid::GridFunction w = prior::white_noise(g, rng);
  grid::GridFunction out(g, M.solve(w.values));
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += mean.values[i];
  return out;
}

grid::GridFunction sample_ring_source(const grid::Grid& g, Rng& rng, int variant,
                                      RingSourceParams* drawn) {
  RingSourceParams p;
  p.r1 = rng.uniform(0.32, 0.40);
  p.r2 = rng.uniform(0.42, 0.48);
  for (int k = 0; k < 3; ++k) {
    p.bump[k][0] = rng.uniform(-1.0, 1.0);   // amplitude
    p.bump[k][1] = rng.uniform(50.0, 60.0);  // x curvature
    p.bump[k][2] = rng.uniform(0.3, 0.7);    // x center
    p.bump[k][3] = rng.uniform(50.0, 60.0);  // y curvature
    p.bump[k][4] = rng.uniform(0.3, 0.7);    // y center
  }
  RingSourceParams extra;
  if (variant == 2) {
    for (int k = 0; k < 3; ++k) {
      extra.bump[k][0] = rng.uniform(-1.0, 1.0);
      extra.bump[k][1] = rng.uniform(50.0, 60.0);
      extra.bump[k][2] = rng.uniform(0.3, 0.7);
      extra.bump[k][3] = rng.uniform(50.0, 60.0);
      extra.bump[k][4] = rng.uniform(0.3, 0.7);
    }
  }
  if (drawn) *drawn = p;

  const auto bumps = [](const RingSourceParams& q, double x, double y) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k)
      s += q.bump[k][0] * std::exp(-q.bump[k][1] * (x - q.bump[k][2]) * (x - q.bump[k][2]) -
                                   q.bump[k][3] * (y - q.bump[k][4]) * (y - q.bump[k][4]));
    return s;
  };

  return grid::sample(g, [&](double x, double y) {
    const double r = std::hypot(x - 0.5, y - 0.5);
    double v = 0.0;
    if (r < p.r1)
      v = bumps(p, x, y);
    else if (r <= p.r2)
      v = -0.5;
    if (variant == 2) v += bumps(extra, x, y);
    return v;
  });
}

std::pair<std::vector<double>, std::vector<double>> add_multiplicative_noise(
    const std::vector<double>& d_clean, double a_level, Rng& rng) {
  std::vector<double> noisy(d_clean.size()), var(d_clean.size());
  for (std::size_t i = 0; i < d_clean.size(); ++i) {
    noisy[i] = d_clean[i] + a_level * rng.normal() * d_clean[i];
    var[i] = a_level * a_level * d_clean[i] * d_clean[i];
  }
  return {std::move(noisy), std::move(var)};
}

void DatasetConfig::validate() const {
  if (experiment != "elliptic" && experiment != "helmholtz")
    throw ConfigError("dataset: unknown experiment '" + experiment + "'");
  if (n_items < 0) throw ConfigError("dataset: n_items must be >= 0");
  if (inv_n < 2 || fine_n < 2) throw ConfigError("dataset: grids need at least 2 nodes");
  if (fine_n < 2 * inv_n - 1)
    throw ConfigError("dataset: fine grid must be at least twice the inversion grid per "
                      "axis (inverse-crime guard)");
  if (experiment == "helmholtz" && kappas.empty())
    throw ConfigError("dataset: helmholtz needs a wavenumber schedule");
}

nlohmann::json DatasetConfig::to_json() const {
  return nlohmann::json{{"experiment", experiment},
                        {"n_items", n_items},
                        {"fine_n", fine_n},
                        {"inv_n", inv_n},
                        {"alpha_pde", alpha_pde},
                        {"sensor_lattice", sensor_lattice},
                        {"grf_mean", grf_mean},
                        {"grf_theta_x", grf_theta_x},
                        {"grf_theta_y", grf_theta_y},
                        {"grf_alpha_amp", grf_alpha_amp},
                        {"mean_perturbation", mean_perturbation},
                        {"mult_noise_level", mult_noise_level},
                        {"mult_noise_sampled", mult_noise_sampled},
                        {"kappas", kappas},
                        {"boundary_sensors", boundary_sensors},
                        {"pml",
                         {{"thickness", pml.thickness},
                          {"strength", pml.strength},
                          {"profile_exponent", pml.profile_exponent}}},
                        {"ring_variant", ring_variant},
                        {"gauss_noise_level", gauss_noise_level}};
}

DatasetConfig DatasetConfig::from_json(const nlohmann::json& j) {
  DatasetConfig c;
  c.experiment = j.value("experiment", c.experiment);
  // forward-config aliases: {"model", "data_grid", "inv_grid", "sensors":{...}}
  c.experiment = j.value("model", c.experiment);
  c.fine_n = j.value("data_grid", c.fine_n);
  c.inv_n = j.value("inv_grid", c.inv_n);
  if (j.contains("sensors")) {
    const auto& s = j.at("sensors");
    c.sensor_lattice = s.value("lattice", c.sensor_lattice);
    c.boundary_sensors = s.value("boundary", c.boundary_sensors);
  }
  c.n_items = j.value("n_items", c.n_items);
  c.fine_n = j.value("fine_n", c.fine_n);
  c.inv_n = j.value("inv_n", c.inv_n);
  c.alpha_pde = j.value("alpha_pde", c.alpha_pde);
  c.sensor_lattice = j.value("sensor_lattice", c.sensor_lattice);
  c.grf_mean = j.value("grf_mean", c.grf_mean);
  c.grf_theta_x = j.value("grf_theta_x", c.grf_theta_x);
  c.grf_theta_y = j.value("grf_theta_y", c.grf_theta_y);
  c.grf_alpha_amp = j.value("grf_alpha_amp", c.grf_alpha_amp);
  c.mean_perturbation = j.value("mean_perturbation", c.mean_perturbation);
  c.mult_noise_level = j.value("mult_noise_level", c.mult_noise_level);
  c.mult_noise_sampled = j.value("mult_noise_sampled", c.mult_noise_sampled);
  if (j.contains("kappas")) c.kappas = j.at("kappas").get<std::vector<double>>();
  c.boundary_sensors = j.value("boundary_sensors", c.boundary_sensors);
  if (j.contains("pml")) {
    const auto& p = j.at("pml");
    c.pml.thickness = p.value("thickness", c.pml.thickness);
    c.pml.strength = p.value("strength", c.pml.strength);
    c.pml.profile_exponent = p.value("profile_exponent", c.pml.profile_exponent);
  }
  c.ring_variant = j.value("ring_variant", c.ring_variant);
  c.gauss_noise_level = j.value("gauss_noise_level", c.gauss_noise_level);
  return c;
}

std::shared_ptr<forward::LinearForward> make_forward(const DatasetConfig& cfg, int n) {
  const auto g = grid::unit_square(n);
  if (cfg.experiment == "elliptic")
    return std::make_shared<forward::EllipticForward>(
        cfg.alpha_pde, g, forward::SensorSet::lattice(cfg.sensor_lattice));
  return std::make_shared<forward::HelmholtzForward>(
      g, cfg.kappas, cfg.pml, forward::SensorSet::boundary(cfg.boundary_sensors));
}

std::shared_ptr<forward::LinearForward> make_inv_forward(const DatasetConfig& cfg) {
  return make_forward(cfg, cfg.inv_n);
}

std::pair<int, int> data_image_shape(const DatasetConfig& cfg) {
  if (cfg.experiment == "elliptic") return {cfg.sensor_lattice, cfg.sensor_lattice};
  return {static_cast<int>(cfg.kappas.size()), 2 * cfg.boundary_sensors};
}

Dataset build_dataset(const DatasetConfig& cfg, std::uint64_t master_seed) {
  cfg.validate();
  Dataset ds;
  ds.config = cfg;
  ds.fine_grid = grid::unit_square(cfg.fine_n);
  ds.inv_grid = grid::unit_square(cfg.inv_n);
  ds.master_seed = master_seed;

  const auto H_fine = make_forward(cfg, cfg.fine_n);
  const auto H_inv = make_inv_forward(cfg);

  const grid::GridFunction grf_mean = grid::sample(ds.fine_grid, [&](double x, double y) {
    double m = cfg.grf_mean;
    if (cfg.mean_perturbation)
      m += 0.2 * std::sin(2 * M_PI * x) * std::sin(2 * M_PI * y);
    return m;
  });

  ds.items.reserve(cfg.n_items);
  for (int i = 0; i < cfg.n_items; ++i) {
    Item item;
    item.seed = child_seed(master_seed, static_cast<std::uint64_t>(i));
    Rng rng(item.seed);
    try {
      if (cfg.experiment == "elliptic") {
        item.u_truth = sample_grf_aniso(grf_mean, cfg.grf_theta_x, cfg.grf_theta_y,
                                        cfg.grf_alpha_amp, rng);
        item.d_clean = H_fine->apply(item.u_truth);
        const double a = cfg.mult_noise_sampled
                             ? rng.uniform(-cfg.mult_noise_level, cfg.mult_noise_level)
                             : cfg.mult_noise_level;
        auto [noisy, var] = add_multiplicative_noise(item.d_clean, a, rng);
        item.d_noisy = std::move(noisy);
        item.true_variance = std::move(var);
      } else {
        item.u_truth = sample_ring_source(ds.fine_grid, rng, cfg.ring_variant);
        const std::vector<double> d_fine = H_fine->apply(item.u_truth);
        // clean target: the rough (inversion-grid) solver output
        item.d_clean = H_inv->apply(grid::rescale(item.u_truth, ds.inv_grid));
        double mean_abs = 0.0;
        for (double v : d_fine) mean_abs += std::fabs(v);
        mean_abs /= static_cast<double>(d_fine.size());
        const double std_dev = cfg.gauss_noise_level * mean_abs;
        item.d_noisy.resize(d_fine.size());
        item.true_variance.assign(d_fine.size(), std_dev * std_dev);
        for (std::size_t k = 0; k < d_fine.size(); ++k)
          item.d_noisy[k] = d_fine[k] + std_dev * rng.normal();
      }
    } catch (const SolverError& e) {
      throw SolverError("build_dataset: item " + std::to_string(i) + ": " + e.what());
    }
    ds.items.push_back(std::move(item));
  }
  return ds;
}

namespace {

void write_blob(const fs::path& p, const std::vector<double>& v) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("dataset: cannot write " + p.string());
  f.write(reinterpret_cast<const char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> read_blob(const fs::path& p, std::size_t n) {
  std::vector<double> v(n);
  std::ifstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("dataset: cannot read " + p.string());
  f.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (static_cast<std::size_t>(f.gcount()) != n * sizeof(double))
    throw std::runtime_error("dataset: truncated blob " + p.string());
  return v;
}

} // namespace

void save_dataset(const Dataset& ds, const std::string& dir) {
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["config"] = ds.config.to_json();
  manifest["master_seed"] = ds.master_seed;
  manifest["n_items"] = ds.items.size();
  manifest["data_dim"] = ds.data_dim();
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& it : ds.items) seeds.push_back(it.seed);
  manifest["item_seeds"] = seeds;

  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    const auto& it = ds.items[i];
    const std::string stem = dir + "/item_" + std::to_string(i);
    grid::save(it.u_truth, stem + "_u");
    write_blob(stem + "_d_noisy.f64", it.d_noisy);
    write_blob(stem + "_d_clean.f64", it.d_clean);
    write_blob(stem + "_var.f64", it.true_variance);
  }
  std::ofstream mf(dir + "/manifest.json", std::ios::trunc);
  mf << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.json");
  if (!mf) throw std::runtime_error("dataset: missing manifest in " + dir);
  const nlohmann::json manifest = nlohmann::json::parse(mf);

  Dataset ds;
  ds.config = DatasetConfig::from_json(manifest.at("config"));
  ds.master_seed = manifest.at("master_seed").get<std::uint64_t>();
  ds.fine_grid = grid::unit_square(ds.config.fine_n);
  ds.inv_grid = grid::unit_square(ds.config.inv_n);
  const std::size_t n = manifest.at("n_items").get<std::size_t>();
  const std::size_t nd = manifest.at("data_dim").get<std::size_t>();
  const auto seeds = manifest.at("item_seeds").get<std::vector<std::uint64_t>>();

  ds.items.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Item it;
    const std::string stem = dir + "/item_" + std::to_string(i);
    it.u_truth = grid::load(stem + "_u");
    it.d_noisy = read_blob(stem + "_d_noisy.f64", nd);
    it.d_clean = read_blob(stem + "_d_clean.f64", nd);
    it.true_variance = read_blob(stem + "_var.f64", nd);
    it.seed = seeds.at(i);
    ds.items.push_back(std::move(it));
  }
  return ds;
}

} // namespace vinet::data
