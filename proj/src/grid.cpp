#include "vinet/grid.hpp"

#include <fftw3.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <stdexcept>

#include "vinet/kernels.hpp"
#include <nlohmann/json.hpp>

namespace vinet::grid {

void validate(const Grid& g) {
  if (g.nx < 2 || g.ny < 2) throw std::invalid_argument("Grid: nx, ny must be >= 2");
  if (!(g.width() > 0.0) || !(g.height() > 0.0))
    throw std::invalid_argument("Grid: degenerate domain");
}

GridFunction::GridFunction(const Grid& g, std::vector<double> v) : grid(g), values(std::move(v)) {
  if (values.size() != g.size())
    throw std::invalid_argument("GridFunction: value count does not match grid");
}

std::vector<double> quad_weights(const Grid& g) {
  std::vector<double> w(g.size());
  const double hx = g.hx(), hy = g.hy();
  for (int i = 0; i < g.nx; ++i) {
    const double wx = hx * ((i == 0 || i == g.nx - 1) ? 0.5 : 1.0);
    for (int j = 0; j < g.ny; ++j) {
      const double wy = hy * ((j == 0 || j == g.ny - 1) ? 0.5 : 1.0);
      w[static_cast<std::size_t>(i) * g.ny + j] = wx * wy;
    }
  }
  return w;
}

double inner_l2(const GridFunction& f, const GridFunction& g) {
  if (!(f.grid == g.grid)) throw std::invalid_argument("inner_l2: grid mismatch");
  const std::vector<double> w = quad_weights(f.grid);
  return kernels::wdot(w.data(), f.values.data(), g.values.data(), w.size());
}

namespace {

// Cached 1-D REDFT00 plans per length. Plans are created with
// FFTW_ESTIMATE|FFTW_UNALIGNED so they can be executed on any buffers of the
// right length via the new-array interface.
class Dct1Plans {
 public:
  static Dct1Plans& instance() {
    static Dct1Plans p;
    return p;
  }

  fftw_plan get(int n) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = plans_.find(n);
    if (it != plans_.end()) return it->second;
    std::vector<double> buf(static_cast<std::size_t>(n), 0.0);
    fftw_plan p = fftw_plan_r2r_1d(n, buf.data(), buf.data(), FFTW_REDFT00,
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!p) throw std::runtime_error("dct2: fftw plan creation failed");
    plans_.emplace(n, p);
    return p;
  }

 private:
  Dct1Plans() = default;
  std::mutex mu_;
  std::map<int, fftw_plan> plans_;
};

// REDFT00 with input q yields Y_k = q_0 + (-1)^k q_{n-1} + 2 sum_mid q_j cos(pi jk/(n-1)).
void redft00(int n, double* inout) {
  fftw_execute_r2r(Dct1Plans::instance().get(n), inout, inout);
}

// Weighted forward transform along one axis of length n (spacing h, width L):
// c_k = h * [f_0/2 + (-1)^k f_{n-1}/2 + sum_mid f_j cos] / sqrt(norm_k),
// norm_k = L at the end modes and L/2 otherwise.
void dct1_axis_forward(int n, double h, double L, double* line) {
  for (int j = 0; j < n; ++j) line[j] *= 0.5;
  redft00(n, line);
  const double end = h / std::sqrt(L);
  const double mid = h / std::sqrt(0.5 * L);
  line[0] *= end;
  line[n - 1] *= end;
  for (int k = 1; k < n - 1; ++k) line[k] *= mid;
}

// Inverse: f_i = sum_k c_k cos(pi ki/(n-1)) / sqrt(norm_k).
void dct1_axis_inverse(int n, double L, double* line) {
  const double end = 1.0 / std::sqrt(L);
  const double mid = 0.5 / std::sqrt(0.5 * L);
  line[0] *= end;
  line[n - 1] *= end;
  for (int k = 1; k < n - 1; ++k) line[k] *= mid;
  redft00(n, line);
}

template <class OpY, class OpX>
void transform2d(int nx, int ny, std::vector<double>& a, OpY&& op_y, OpX&& op_x) {
  // y-axis: rows are contiguous
  for (int i = 0; i < nx; ++i) op_y(ny, a.data() + static_cast<std::size_t>(i) * ny);
  // x-axis: gather strided columns
  std::vector<double> col(static_cast<std::size_t>(nx));
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) col[i] = a[static_cast<std::size_t>(i) * ny + j];
    op_x(nx, col.data());
    for (int i = 0; i < nx; ++i) a[static_cast<std::size_t>(i) * ny + j] = col[i];
  }
}

} // namespace

SpectrumField dct2(const GridFunction& f) {
  validate(f.grid);
  const Grid& g = f.grid;
  SpectrumField s(g);
  s.coeffs = f.values;
  const double hx = g.hx(), hy = g.hy(), Lx = g.width(), Ly = g.height();
  transform2d(
      g.nx, g.ny, s.coeffs,
      [&](int n, double* line) { dct1_axis_forward(n, hy, Ly, line); },
      [&](int n, double* line) { dct1_axis_forward(n, hx, Lx, line); });
  return s;
}

GridFunction idct2(const SpectrumField& s) {
  validate(s.grid);
  const Grid& g = s.grid;
  GridFunction f(g);
  f.values = s.coeffs;
  const double Lx = g.width(), Ly = g.height();
  transform2d(
      g.nx, g.ny, f.values,
      [&](int n, double* line) { dct1_axis_inverse(n, Ly, line); },
      [&](int n, double* line) { dct1_axis_inverse(n, Lx, line); });
  return f;
}

double basis_value(const Grid& g, int k, int l, double x, double y) {
  const double Lx = g.width(), Ly = g.height();
  const double nk = (k == 0 || k == g.nx - 1) ? Lx : 0.5 * Lx;
  const double nl = (l == 0 || l == g.ny - 1) ? Ly : 0.5 * Ly;
  return std::cos(k * M_PI * (x - g.domain[0]) / Lx) *
         std::cos(l * M_PI * (y - g.domain[1]) / Ly) / std::sqrt(nk * nl);
}

double interp_bilinear(const GridFunction& f, double x, double y) {
  const Grid& g = f.grid;
  const double sx = (x - g.domain[0]) / g.hx();
  const double sy = (y - g.domain[1]) / g.hy();
  int i = static_cast<int>(std::floor(sx));
  int j = static_cast<int>(std::floor(sy));
  i = std::max(0, std::min(i, g.nx - 2));
  j = std::max(0, std::min(j, g.ny - 2));
  const double tx = std::max(0.0, std::min(sx - i, 1.0));
  const double ty = std::max(0.0, std::min(sy - j, 1.0));
  return (1 - tx) * (1 - ty) * f.at(i, j) + tx * (1 - ty) * f.at(i + 1, j) +
         (1 - tx) * ty * f.at(i, j + 1) + tx * ty * f.at(i + 1, j + 1);
}

GridFunction rescale(const GridFunction& f, const Grid& target) {
  validate(target);
  if (target == f.grid) return f;
  GridFunction out(target);
  for (int i = 0; i < target.nx; ++i)
    for (int j = 0; j < target.ny; ++j)
      out.at(i, j) = interp_bilinear(f, target.x(i), target.y(j));
  return out;
}

void save(const GridFunction& f, const std::string& path_base) {
  static_assert(std::endian::native == std::endian::little,
                "serialization assumes a little-endian host");
  std::ofstream bin(path_base + ".f64", std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("save: cannot open " + path_base + ".f64");
  bin.write(reinterpret_cast<const char*>(f.values.data()),
            static_cast<std::streamsize>(f.values.size() * sizeof(double)));
  nlohmann::json meta{{"nx", f.grid.nx}, {"ny", f.grid.ny}, {"domain", f.grid.domain}};
  std::ofstream js(path_base + ".json", std::ios::trunc);
  js << meta.dump(2) << "\n";
}

GridFunction load(const std::string& path_base) {
  std::ifstream js(path_base + ".json");
  if (!js) throw std::runtime_error("load: cannot open " + path_base + ".json");
  nlohmann::json meta = nlohmann::json::parse(js);
  Grid g;
  g.nx = meta.at("nx").get<int>();
  g.ny = meta.at("ny").get<int>();
  g.domain = meta.at("domain").get<std::array<double, 4>>();
  validate(g);
  GridFunction f(g);
  std::ifstream bin(path_base + ".f64", std::ios::binary);
  if (!bin) throw std::runtime_error("load: cannot open " + path_base + ".f64");
  bin.read(reinterpret_cast<char*>(f.values.data()),
           static_cast<std::streamsize>(f.values.size() * sizeof(double)));
  if (static_cast<std::size_t>(bin.gcount()) != f.values.size() * sizeof(double))
    throw std::runtime_error("load: truncated field file " + path_base);
  return f;
}

} // namespace vinet::grid
