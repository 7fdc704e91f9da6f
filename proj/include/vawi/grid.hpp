#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "vawi/common.hpp"

namespace vawi {

// Regular 2D grid. The interior is nx-by-nz nodes with spacing dx, dz and
// origin (x0, z0); an absorbing pad of npml nodes surrounds it on all four
// sides. Interior linear index runs z fastest: idx(i, j) = i * nz + j.
struct Grid2D {
  int nx = 0, nz = 0, npml = 0;
  double dx = 0, dz = 0;
  double x0 = 0, z0 = 0;

  int n() const { return nx * nz; }
  int nxp() const { return nx + 2 * npml; }
  int nzp() const { return nz + 2 * npml; }
  int n_pad() const { return nxp() * nzp(); }

  int idx(int i, int j) const { return i * nz + j; }
  int pidx(int ip, int jp) const { return ip * nzp() + jp; }
  // padded linear index of interior node (i, j)
  int pad_idx(int i, int j) const { return pidx(i + npml, j + npml); }

  double x(int i) const { return x0 + i * dx; }
  double z(int j) const { return z0 + j * dz; }
  // coordinates of a padded node; negative values lie in the pad
  double xp(int ip) const { return x0 + (ip - npml) * dx; }
  double zp(int jp) const { return z0 + (jp - npml) * dz; }

  bool operator==(const Grid2D&) const = default;
};

inline Grid2D make_grid(int nx, int nz, double dx, double dz, int npml,
                        double x0 = 0.0, double z0 = 0.0) {
  if (nx < 3 || nz < 3)
    throw std::invalid_argument("make_grid: nx and nz must be >= 3");
  if (!(dx > 0.0) || !(dz > 0.0))
    throw std::invalid_argument("make_grid: dx and dz must be positive");
  if (npml < 0) throw std::invalid_argument("make_grid: npml must be >= 0");
  return Grid2D{nx, nz, npml, dx, dz, x0, z0};
}

// Interior-sized scalar field with value semantics (carries its grid).
template <class S>
struct Field {
  Grid2D grid;
  Eigen::Vector<S, Eigen::Dynamic> data;

  Field() = default;
  explicit Field(const Grid2D& g, S fill = S{})
      : grid(g), data(Eigen::Vector<S, Eigen::Dynamic>::Constant(g.n(), fill)) {}
  Field(const Grid2D& g, Eigen::Vector<S, Eigen::Dynamic> values)
      : grid(g), data(std::move(values)) {
    if (data.size() != grid.n())
      throw std::invalid_argument("Field: value vector does not match grid");
  }

  S& operator()(int i, int j) { return data[grid.idx(i, j)]; }
  const S& operator()(int i, int j) const { return data[grid.idx(i, j)]; }

  S& at(int i, int j) {
    check(i, j);
    return data[grid.idx(i, j)];
  }
  const S& at(int i, int j) const {
    check(i, j);
    return data[grid.idx(i, j)];
  }

 private:
  void check(int i, int j) const {
    if (i < 0 || i >= grid.nx || j < 0 || j >= grid.nz)
      throw std::out_of_range("Field::at(" + std::to_string(i) + ", " +
                              std::to_string(j) + ") outside " +
                              std::to_string(grid.nx) + "x" +
                              std::to_string(grid.nz) + " grid");
  }
};

using RealField = Field<double>;
using ComplexField = Field<cplx>;

// uniform elementwise bounds; defaults are unbounded
struct BoxBounds {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  bool finite() const { return std::isfinite(lo) || std::isfinite(hi); }
};

inline BoxBounds make_bounds(double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("make_bounds: lo > hi");
  return BoxBounds{lo, hi};
}

struct Position {
  double x = 0, z = 0;
};

struct Acquisition {
  std::vector<Position> sources;
  std::vector<Position> receivers;
};

// nearest interior node; throws if the snapped node falls outside the interior
inline std::pair<int, int> nearest_node(const Grid2D& g, Position p) {
  int i = static_cast<int>(std::llround((p.x - g.x0) / g.dx));
  int j = static_cast<int>(std::llround((p.z - g.z0) / g.dz));
  if (i < 0 || i >= g.nx || j < 0 || j >= g.nz)
    throw std::invalid_argument("position (" + std::to_string(p.x) + ", " +
                                std::to_string(p.z) +
                                ") snaps outside the interior grid");
  return {i, j};
}

struct Circle {
  double cx = 0, cz = 0, diameter = 0;
};

struct Rect {
  double cx = 0, cz = 0, width = 0, height = 0;
};

struct RegionSpec {
  std::variant<Circle, Rect> shape;
  double value = 0;
};

inline bool contains(const Circle& c, double x, double z) {
  double r = 0.5 * c.diameter;
  return (x - c.cx) * (x - c.cx) + (z - c.cz) * (z - c.cz) <= r * r;
}

inline bool contains(const Rect& r, double x, double z) {
  return std::abs(x - r.cx) <= 0.5 * r.width &&
         std::abs(z - r.cz) <= 0.5 * r.height;
}

inline bool contains(const RegionSpec& rs, double x, double z) {
  return std::visit([&](const auto& s) { return contains(s, x, z); }, rs.shape);
}

// paint regions over a constant background; later regions win on overlap
inline RealField field_from_regions(const Grid2D& g, double background,
                                    const std::vector<RegionSpec>& regions) {
  double xlo = g.x0, xhi = g.x(g.nx - 1);
  double zlo = g.z0, zhi = g.z(g.nz - 1);
  for (const auto& rs : regions) {
    auto bbox = std::visit(
        [](const auto& s) -> std::array<double, 4> {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, Circle>) {
            double r = 0.5 * s.diameter;
            return {s.cx - r, s.cx + r, s.cz - r, s.cz + r};
          } else {
            return {s.cx - 0.5 * s.width, s.cx + 0.5 * s.width,
                    s.cz - 0.5 * s.height, s.cz + 0.5 * s.height};
          }
        },
        rs.shape);
    if (bbox[1] < xlo || bbox[0] > xhi || bbox[3] < zlo || bbox[2] > zhi)
      throw std::invalid_argument("field_from_regions: region lies entirely outside the grid");
  }
  RealField f(g, background);
  for (int i = 0; i < g.nx; ++i)
    for (int j = 0; j < g.nz; ++j)
      for (const auto& rs : regions)
        if (contains(rs, g.x(i), g.z(j))) f(i, j) = rs.value;
  return f;
}

inline RealField velocity_to_slowness_sq(const RealField& v) {
  RealField m(v.grid);
  for (int k = 0; k < v.grid.n(); ++k) {
    if (!(v.data[k] > 0.0))
      throw std::invalid_argument("velocity_to_slowness_sq: non-positive velocity");
    m.data[k] = 1.0 / (v.data[k] * v.data[k]);
  }
  return m;
}

inline RealField slowness_sq_to_velocity(const RealField& m) {
  RealField v(m.grid);
  for (int k = 0; k < m.grid.n(); ++k) {
    if (!(m.data[k] > 0.0))
      throw std::invalid_argument("slowness_sq_to_velocity: non-positive squared slowness");
    v.data[k] = 1.0 / std::sqrt(m.data[k]);
  }
  return v;
}

}  // namespace vawi
