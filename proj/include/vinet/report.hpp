#pragma once

// Run reports: relative errors against the truth, per-item timings, CSV
// tables, PGM images (16-bit, with CSV matrices as the lossless record), and
// reproducible config hashing.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vinet/grid.hpp"

namespace vinet::report {

// || rescale(u_est) - u_truth ||_L2 / || u_truth ||_L2 on the truth's grid.
double relative_error(const grid::GridFunction& u_est, const grid::GridFunction& u_truth);

std::uint64_t fnv1a(const std::string& s);
std::string config_hash(const nlohmann::json& j);

struct RunReport {
  std::string method;
  int grid_n = 0;
  std::string config_hash;
  std::vector<double> relative_errors;
  std::vector<double> seconds;

  double mean_error() const;
  double median_error() const;
  double median_seconds() const;
  nlohmann::json to_json() const;
};

// columns: method, grid, item, relerr, seconds
void write_report_csv(const std::vector<RunReport>& reports, const std::string& path);

// 16-bit big-endian PGM scaled to [min, max] (recorded in a sidecar), plus a
// full-precision CSV matrix next to it.
void write_field_images(const grid::GridFunction& f, const std::string& path_base);

double median(std::vector<double> v);

} // namespace vinet::report
