#pragma once

// Regular-grid scalar fields on an axis-aligned rectangle (default [0,1]^2),
// trapezoid-weighted L2 inner products, bilinear rescaling between
// resolutions, and the 2-D cosine transform that diagonalizes the Neumann
// Laplacian. The cosine basis is orthonormalized against the trapezoid
// inner product, so Parseval and adjoint identities hold exactly at every
// resolution.

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace vinet::grid {

struct Grid {
  int nx = 2;
  int ny = 2;
  // x0, y0, x1, y1
  std::array<double, 4> domain{0.0, 0.0, 1.0, 1.0};

  double width() const { return domain[2] - domain[0]; }
  double height() const { return domain[3] - domain[1]; }
  double hx() const { return width() / (nx - 1); }
  double hy() const { return height() / (ny - 1); }
  double x(int i) const { return domain[0] + i * hx(); }
  double y(int j) const { return domain[1] + j * hy(); }
  std::size_t size() const { return static_cast<std::size_t>(nx) * ny; }

  bool operator==(const Grid&) const = default;
};

// Throws std::invalid_argument if nx or ny < 2 or the domain is degenerate.
void validate(const Grid& g);

inline Grid unit_square(int n) { return Grid{n, n}; }

struct GridFunction {
  Grid grid;
  std::vector<double> values;  // row-major, values[i*ny + j] = f(x_i, y_j)

  GridFunction() = default;
  explicit GridFunction(const Grid& g) : grid(g), values(g.size(), 0.0) {}
  GridFunction(const Grid& g, std::vector<double> v);

  double& at(int i, int j) { return values[static_cast<std::size_t>(i) * grid.ny + j]; }
  double at(int i, int j) const { return values[static_cast<std::size_t>(i) * grid.ny + j]; }
};

// Cosine-basis coefficients; coeffs[k*ny + l] multiplies the orthonormal
// mode ~ cos(k pi x / Lx) cos(l pi y / Ly).
struct SpectrumField {
  Grid grid;
  std::vector<double> coeffs;

  SpectrumField() = default;
  explicit SpectrumField(const Grid& g) : grid(g), coeffs(g.size(), 0.0) {}
};

// Per-node trapezoid quadrature weights (row-major, same layout as values).
std::vector<double> quad_weights(const Grid& g);

// Samples a function of (x, y) at the grid nodes.
template <class F>
GridFunction sample(const Grid& g, F&& f) {
  GridFunction out(g);
  for (int i = 0; i < g.nx; ++i)
    for (int j = 0; j < g.ny; ++j) out.at(i, j) = f(g.x(i), g.y(j));
  return out;
}

// Trapezoid-weighted L2 inner product; both fields must share the grid.
double inner_l2(const GridFunction& f, const GridFunction& g);
inline double norm_l2(const GridFunction& f) { return std::sqrt(inner_l2(f, f)); }

// Forward / inverse transform to the orthonormal cosine basis.
SpectrumField dct2(const GridFunction& f);
GridFunction idct2(const SpectrumField& s);

// Value of the orthonormal basis function (k, l) at (x, y).
double basis_value(const Grid& g, int k, int l, double x, double y);

// Bilinear interpolation of f at an arbitrary point (clamped to the domain).
double interp_bilinear(const GridFunction& f, double x, double y);

// Bilinear rescaling onto the target grid (identity if target == f.grid).
GridFunction rescale(const GridFunction& f, const Grid& target);

// Raw little-endian binary + JSON sidecar ("<base>.f64", "<base>.json").
void save(const GridFunction& f, const std::string& path_base);
GridFunction load(const std::string& path_base);

} // namespace vinet::grid
