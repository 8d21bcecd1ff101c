#include "vinet/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace vinet::report {

double relative_error(const grid::GridFunction& u_est, const grid::GridFunction& u_truth) {
  const double denom = grid::norm_l2(u_truth);
  if (!(denom > 0.0)) throw std::domain_error("relative_error: truth has zero norm");
  const grid::GridFunction est = grid::rescale(u_est, u_truth.grid);
  grid::GridFunction diff(u_truth.grid);
  for (std::size_t i = 0; i < diff.values.size(); ++i)
    diff.values[i] = est.values[i] - u_truth.values[i];
  return grid::norm_l2(diff) / denom;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string config_hash(const nlohmann::json& j) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(j.dump())));
  return std::string(buf);
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double RunReport::mean_error() const {
  double s = 0.0;
  for (double e : relative_errors) s += e;
  return relative_errors.empty() ? 0.0 : s / relative_errors.size();
}
double RunReport::median_error() const { return median(relative_errors); }
double RunReport::median_seconds() const { return median(seconds); }

nlohmann::json RunReport::to_json() const {
  return nlohmann::json{{"method", method},
                        {"grid", grid_n},
                        {"config_hash", config_hash},
                        {"relative_errors", relative_errors},
                        {"seconds", seconds},
                        {"mean_error", mean_error()},
                        {"median_error", median_error()},
                        {"median_seconds", median_seconds()}};
}

void write_report_csv(const std::vector<RunReport>& reports, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("write_report_csv: cannot open " + path);
  f << "method,grid,item,relerr,seconds\n";
  f.precision(12);
  for (const auto& r : reports)
    for (std::size_t i = 0; i < r.relative_errors.size(); ++i)
      f << r.method << ',' << r.grid_n << ',' << i << ',' << r.relative_errors[i] << ','
        << (i < r.seconds.size() ? r.seconds[i] : 0.0) << "\n";
}

void write_field_images(const grid::GridFunction& f, const std::string& path_base) {
  double lo = f.values[0], hi = f.values[0];
  for (double v : f.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi > lo ? hi - lo : 1.0;

  {
    std::ofstream img(path_base + ".pgm", std::ios::binary | std::ios::trunc);
    img << "P5\n" << f.grid.ny << " " << f.grid.nx << "\n65535\n";
    for (int i = 0; i < f.grid.nx; ++i)
      for (int j = 0; j < f.grid.ny; ++j) {
        const double t = (f.at(i, j) - lo) / span;
        const auto v = static_cast<std::uint16_t>(std::lround(t * 65535.0));
        const unsigned char bytes[2] = {static_cast<unsigned char>(v >> 8),
                                        static_cast<unsigned char>(v & 0xff)};
        img.write(reinterpret_cast<const char*>(bytes), 2);
      }
  }
  {
    std::ofstream meta(path_base + ".pgm.json", std::ios::trunc);
    meta << nlohmann::json{{"min", lo}, {"max", hi}}.dump() << "\n";
  }
  {
    std::ofstream csv(path_base + ".csv", std::ios::trunc);
    csv.precision(17);
    for (int i = 0; i < f.grid.nx; ++i) {
      for (int j = 0; j < f.grid.ny; ++j) csv << f.at(i, j) << (j + 1 < f.grid.ny ? "," : "");
      csv << "\n";
    }
  }
}

} // namespace vinet::report
