#pragma once

// Synthetic ground-truth generators, noise injection, inverse-crime-safe
// data synthesis on a fine grid, and dataset persistence. All randomness
// derives from one master seed through the splitmix child-seed scheme.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vinet/forward.hpp"
#include "vinet/grid.hpp"
#include "vinet/rng.hpp"

namespace vinet::data {

// Anisotropic Gaussian random field: sample = mean + M^{-1} W with
// M = alpha_amp * (Id - div(Theta grad)) (5-point Neumann stencil) and W
// quadrature-normalized white noise.
grid::GridFunction sample_grf_aniso(const grid::GridFunction& mean, double theta_x,
                                    double theta_y, double alpha_amp, Rng& rng);

// Ring-and-bumps source: a 3-bump Gaussian sum inside r < r1, -0.5 on the
// annulus r1 <= r <= r2, 0 outside; variant 2 adds an independent bump sum
// globally (the biased-prior test family).
struct RingSourceParams {
  double r1 = 0.0, r2 = 0.0;
  double bump[3][5] = {};
};
grid::GridFunction sample_ring_source(const grid::Grid& g, Rng& rng, int variant = 1,
                                      RingSourceParams* drawn = nullptr);

// d = d_c + a * (eta .* d_c); returns the noisy vector and the per-sensor
// true variances a^2 d_c^2.
std::pair<std::vector<double>, std::vector<double>> add_multiplicative_noise(
    const std::vector<double>& d_clean, double a_level, Rng& rng);

struct Item {
  grid::GridFunction u_truth;  // fine grid
  std::vector<double> d_noisy;
  std::vector<double> d_clean;
  std::vector<double> true_variance;
  std::uint64_t seed = 0;
};

struct DatasetConfig {
  std::string experiment = "elliptic";  // or "helmholtz"
  int n_items = 200;
  int fine_n = 129;
  int inv_n = 33;
  // elliptic
  double alpha_pde = 0.05;
  int sensor_lattice = 20;
  double grf_mean = 2.0;
  double grf_theta_x = 10.0;
  double grf_theta_y = 1.0;
  double grf_alpha_amp = 0.5;
  // type-2 style mean perturbation (generalization test sets)
  bool mean_perturbation = false;
  double mult_noise_level = 0.1;
  bool mult_noise_sampled = true;  // training: a ~ U[-level, level]; test: fixed
  // helmholtz
  std::vector<double> kappas{2, 4, 6, 8, 10, 12, 14, 16};
  int boundary_sensors = 32;
  forward::PmlConfig pml;
  int ring_variant = 1;
  double gauss_noise_level = 0.05;

  nlohmann::json to_json() const;
  static DatasetConfig from_json(const nlohmann::json& j);
  void validate() const;  // inverse-crime guard among others
};

struct Dataset {
  DatasetConfig config;
  grid::Grid fine_grid, inv_grid;
  std::uint64_t master_seed = 0;
  std::vector<Item> items;

  std::size_t data_dim() const { return items.empty() ? 0 : items[0].d_noisy.size(); }
};

Dataset build_dataset(const DatasetConfig& cfg, std::uint64_t master_seed);

void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

// The inversion-grid forward operator matching a dataset's configuration.
std::shared_ptr<forward::LinearForward> make_inv_forward(const DatasetConfig& cfg);
std::shared_ptr<forward::LinearForward> make_forward(const DatasetConfig& cfg, int n);

// Data image layout (rows, cols) for the network front ends.
std::pair<int, int> data_image_shape(const DatasetConfig& cfg);

} // namespace vinet::data
