#pragma once

// Sampled occupancy fields and iso-surface extraction (marching cubes / marching squares).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "aro/geom.hpp"
#include "aro/io.hpp"
#include "aro/parallel.hpp"

namespace aro {

inline constexpr double kIsoLevel = 0.5;

/// Occupancy values at the lattice points origin + (i, j, k) * spacing, x fastest.
struct OccupancyGrid {
  std::array<int, 3> res{};
  Vec3 origin;
  Vec3 spacing;
  std::vector<double> values;

  OccupancyGrid() = default;
  OccupancyGrid(std::array<int, 3> r, Vec3 o, Vec3 s, double fill = 0.0) : res(r), origin(o), spacing(s) {
    if (r[0] < 2 || r[1] < 2 || r[2] < 2) throw Error("OccupancyGrid: resolution must be >= 2 per axis");
    values.assign(size(), fill);
  }

  std::size_t size() const {
    return static_cast<std::size_t>(res[0]) * static_cast<std::size_t>(res[1]) * static_cast<std::size_t>(res[2]);
  }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * static_cast<std::size_t>(res[1]) + static_cast<std::size_t>(j)) *
               static_cast<std::size_t>(res[0]) +
           static_cast<std::size_t>(i);
  }
  double at(int i, int j, int k) const { return values[index(i, j, k)]; }
  Vec3 point(int i, int j, int k) const {
    return origin + Vec3{i * spacing.x, j * spacing.y, k * spacing.z};
  }
  double max_spacing() const { return std::max({spacing.x, spacing.y, spacing.z}); }

  void validate() const {
    if (values.size() != size()) throw Error("OccupancyGrid: value count does not match resolution");
    for (double v : values)
      if (!(v >= 0.0 && v <= 1.0)) throw Error("OccupancyGrid: value outside [0, 1]");
  }
};

/// Samples `occ` at every lattice corner of `domain` with res[a] points per axis. Each corner is
/// written by exactly one task, so parallel and sequential runs give identical grids.
inline OccupancyGrid evaluate_grid(const std::function<double(Vec3)>& occ, const Aabb& domain,
                                   std::array<int, 3> res, bool parallel = true) {
  if (res[0] < 2 || res[1] < 2 || res[2] < 2) throw Error("evaluate_grid: resolution must be >= 2 per axis");
  const Vec3 e = domain.extent();
  OccupancyGrid grid(res, domain.min, {e.x / (res[0] - 1), e.y / (res[1] - 1), e.z / (res[2] - 1)});
  auto body = [&](std::size_t idx) {
    const int i = static_cast<int>(idx % static_cast<std::size_t>(res[0]));
    const std::size_t rest = idx / static_cast<std::size_t>(res[0]);
    const int j = static_cast<int>(rest % static_cast<std::size_t>(res[1]));
    const int k = static_cast<int>(rest / static_cast<std::size_t>(res[1]));
    const Vec3 p = grid.point(i, j, k);
    const double v = occ(p);
    if (!(v >= 0.0 && v <= 1.0)) {
      std::ostringstream msg;
      msg << "evaluate_grid: occupancy " << v << " outside [0, 1] at (" << p.x << ", " << p.y << ", " << p.z
          << ")";
      throw Error(msg.str());
    }
    grid.values[idx] = v;
  };
  if (parallel) {
    parallel_for(grid.size(), body);
  } else {
    for (std::size_t i = 0; i < grid.size(); ++i) body(i);
  }
  return grid;
}

// ---------------------------------------------------------------------------------------------
// Marching cubes
//
// The 256-case table is generated rather than transcribed. Corner c has offset (c&1, c>>1&1,
// c>>2&1). On each cube face, walking the corners counter-clockwise as seen from outside, every
// run of inside corners contributes one iso-segment from the edge where the run starts to the
// edge where it ends. A face with two separate inside runs (the ambiguous saddle) therefore keeps
// its inside corners separated. Because this rule depends only on the face's own corner values,
// neighbouring cubes agree on every shared face and the output is crack-free. Segments chain into
// loops that are fan-triangulated with normals pointing from inside to outside.

namespace mc_detail {

struct CubeTables {
  std::array<std::array<int, 2>, 12> edge_corners{};
  // Per case: triangles as triples of cube-edge ids.
  std::array<std::vector<std::array<int, 3>>, 256> triangles;
};

inline const CubeTables& cube_tables() {
  static const CubeTables tables = [] {
    CubeTables t;
    int edge_of[8][8];
    int n = 0;
    for (int a = 0; a < 8; ++a)
      for (int b = 0; b < 8; ++b) edge_of[a][b] = -1;
    for (int a = 0; a < 8; ++a) {
      for (int bit = 0; bit < 3; ++bit) {
        const int b = a | (1 << bit);
        if (b == a) continue;
        t.edge_corners[static_cast<std::size_t>(n)] = {a, b};
        edge_of[a][b] = edge_of[b][a] = n++;
      }
    }
    constexpr int faces[6][4] = {{0, 4, 6, 2}, {1, 3, 7, 5}, {0, 1, 5, 4},
                                 {2, 6, 7, 3}, {0, 2, 3, 1}, {4, 5, 7, 6}};
    for (int mask = 0; mask < 256; ++mask) {
      auto inside = [&](int c) { return (mask >> c) & 1; };
      std::array<int, 12> next;
      next.fill(-1);
      for (const auto& f : faces) {
        for (int s = 0; s < 4; ++s) {
          if (inside(f[s]) || !inside(f[(s + 1) % 4])) continue;
          const int entry = edge_of[f[s]][f[(s + 1) % 4]];
          int u = (s + 1) % 4;
          while (inside(f[(u + 1) % 4])) u = (u + 1) % 4;
          next[static_cast<std::size_t>(entry)] = edge_of[f[u]][f[(u + 1) % 4]];
        }
      }
      std::array<bool, 12> used{};
      for (int start = 0; start < 12; ++start) {
        if (next[static_cast<std::size_t>(start)] < 0 || used[static_cast<std::size_t>(start)]) continue;
        std::vector<int> loop;
        for (int e = start; !used[static_cast<std::size_t>(e)]; e = next[static_cast<std::size_t>(e)]) {
          used[static_cast<std::size_t>(e)] = true;
          loop.push_back(e);
        }
        for (std::size_t i = 1; i + 1 < loop.size(); ++i)
          t.triangles[static_cast<std::size_t>(mask)].push_back({loop[0], loop[i], loop[i + 1]});
      }
    }
    return t;
  }();
  return tables;
}

}  // namespace mc_detail

/// Iso-surface of the grid at `iso` (inside means value > iso), with vertices linearly
/// interpolated along lattice edges and shared between neighbouring cells. Triangles with area
/// at or below 1e-12 are dropped.
inline TriMesh marching_cubes(const OccupancyGrid& grid, double iso = kIsoLevel) {
  const auto& tables = mc_detail::cube_tables();
  const auto [nx, ny, nz] = grid.res;
  // Vertex id per lattice edge: axis-major arrays indexed by the edge's lower lattice point.
  std::array<std::vector<std::int64_t>, 3> edge_vertex;
  for (auto& v : edge_vertex) v.assign(grid.size(), -1);
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;

  auto vertex_on = [&](int i, int j, int k, int ca, int cb) -> std::uint32_t {
    // Corners ca < cb differ in exactly one bit: that bit is the edge axis.
    const int axis = (ca ^ cb) == 1 ? 0 : ((ca ^ cb) == 2 ? 1 : 2);
    const int li = i + (ca & 1), lj = j + ((ca >> 1) & 1), lk = k + ((ca >> 2) & 1);
    const std::size_t lo = grid.index(li, lj, lk);
    auto& slot = edge_vertex[static_cast<std::size_t>(axis)][lo];
    if (slot < 0) {
      const int hi_i = li + (axis == 0), hi_j = lj + (axis == 1), hi_k = lk + (axis == 2);
      const double va = grid.values[lo], vb = grid.at(hi_i, hi_j, hi_k);
      const double t = (iso - va) / (vb - va);
      const Vec3 pa = grid.point(li, lj, lk), pb = grid.point(hi_i, hi_j, hi_k);
      vertices.push_back(pa + (pb - pa) * t);
      slot = static_cast<std::int64_t>(vertices.size() - 1);
    }
    return static_cast<std::uint32_t>(slot);
  };

  for (int k = 0; k + 1 < nz; ++k) {
    for (int j = 0; j + 1 < ny; ++j) {
      for (int i = 0; i + 1 < nx; ++i) {
        int mask = 0;
        for (int c = 0; c < 8; ++c)
          if (grid.at(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)) > iso) mask |= 1 << c;
        for (const auto& tri : tables.triangles[static_cast<std::size_t>(mask)]) {
          std::array<std::uint32_t, 3> f{};
          for (int v = 0; v < 3; ++v) {
            const auto& ec = tables.edge_corners[static_cast<std::size_t>(tri[static_cast<std::size_t>(v)])];
            f[static_cast<std::size_t>(v)] = vertex_on(i, j, k, ec[0], ec[1]);
          }
          if (triangle_area({vertices[f[0]], vertices[f[1]], vertices[f[2]]}) > 1e-12) triangles.push_back(f);
        }
      }
    }
  }
  TriMesh mesh;
  mesh.vertices = std::move(vertices);
  mesh.triangles = std::move(triangles);
  mesh.watertight = !mesh.triangles.empty() && mesh.is_edge_manifold_closed();
  return mesh;
}

// ---------------------------------------------------------------------------------------------
// 2D grids and marching squares

/// Values at origin + (i * spacing.x, j * spacing.y), x fastest.
struct Grid2D {
  int nx = 0, ny = 0;
  Vec2 origin;
  Vec2 spacing;
  std::vector<double> values;

  Grid2D() = default;
  Grid2D(int w, int h, Vec2 o, Vec2 s, double fill = 0.0) : nx(w), ny(h), origin(o), spacing(s) {
    if (w < 2 || h < 2) throw Error("Grid2D: resolution must be >= 2 per axis");
    values.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill);
  }
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(i);
  }
  double at(int i, int j) const { return values[index(i, j)]; }
  double& at(int i, int j) { return values[index(i, j)]; }
  Vec2 point(int i, int j) const { return {origin.x + i * spacing.x, origin.y + j * spacing.y}; }
};

struct Polyline {
  std::vector<Vec2> points;
  bool closed = false;

  double length() const {
    double sum = 0;
    for (std::size_t i = 0; i + 1 < points.size(); ++i) sum += distance(points[i], points[i + 1]);
    if (closed && points.size() > 1) sum += distance(points.back(), points.front());
    return sum;
  }
};

/// Iso-contours (inside means value > iso) as polylines oriented counter-clockwise around the
/// inside. Contours reaching the grid border are returned open.
inline std::vector<Polyline> marching_squares(const Grid2D& grid, double iso = kIsoLevel) {
  // Lattice edge key: (lower point index) * 2 + axis.
  auto key = [&](int i, int j, int axis) { return static_cast<std::int64_t>(grid.index(i, j)) * 2 + axis; };
  auto edge_point = [&](std::int64_t e) {
    const auto lo = static_cast<std::size_t>(e / 2);
    const int axis = static_cast<int>(e % 2);
    const int i = static_cast<int>(lo % static_cast<std::size_t>(grid.nx));
    const int j = static_cast<int>(lo / static_cast<std::size_t>(grid.nx));
    const int hi = axis == 0 ? static_cast<int>(grid.index(i + 1, j)) : static_cast<int>(grid.index(i, j + 1));
    const double va = grid.values[lo], vb = grid.values[static_cast<std::size_t>(hi)];
    const double t = (iso - va) / (vb - va);
    const Vec2 pa = grid.point(i, j), pb = axis == 0 ? grid.point(i + 1, j) : grid.point(i, j + 1);
    return pa + (pb - pa) * t;
  };

  // Segments run from entry edge to exit edge with the inside on their right.
  std::map<std::int64_t, std::int64_t> next;
  std::map<std::int64_t, int> incoming;
  for (int j = 0; j + 1 < grid.ny; ++j) {
    for (int i = 0; i + 1 < grid.nx; ++i) {
      const int ci[4] = {i, i + 1, i + 1, i};
      const int cj[4] = {j, j, j + 1, j + 1};
      const std::int64_t edges[4] = {key(i, j, 0), key(i + 1, j, 1), key(i, j + 1, 0), key(i, j, 1)};
      bool in[4];
      for (int c = 0; c < 4; ++c) in[c] = grid.at(ci[c], cj[c]) > iso;
      for (int s = 0; s < 4; ++s) {
        if (in[s] || !in[(s + 1) % 4]) continue;
        int u = (s + 1) % 4;
        while (in[(u + 1) % 4]) u = (u + 1) % 4;
        next[edges[s]] = edges[u];
        ++incoming[edges[u]];
      }
    }
  }

  std::vector<Polyline> out;
  std::map<std::int64_t, bool> used;
  auto trace = [&](std::int64_t start) {
    Polyline line;
    std::int64_t e = start;
    for (;;) {
      used[e] = true;
      line.points.push_back(edge_point(e));
      auto it = next.find(e);
      if (it == next.end()) break;
      e = it->second;
      if (e == start) {
        line.closed = true;
        break;
      }
    }
    std::reverse(line.points.begin(), line.points.end());
    out.push_back(std::move(line));
  };
  for (const auto& [e, to] : next)
    if (!incoming.count(e) && !used[e]) trace(e);
  for (const auto& [e, to] : next)
    if (!used[e]) trace(e);
  return out;
}

// ---------------------------------------------------------------------------------------------
// File formats

// OccupancyGrid file: four ASCII header lines
//   ARO-GRID v1
//   resolution <nx> <ny> <nz>
//   origin <x> <y> <z>
//   spacing <sx> <sy> <sz>
// followed by nx*ny*nz little-endian float32 values, x fastest.
inline void write_grid(std::ostream& os, const OccupancyGrid& g) {
  os << "ARO-GRID v1\n"
     << "resolution " << g.res[0] << ' ' << g.res[1] << ' ' << g.res[2] << '\n'
     << std::setprecision(17) << "origin " << g.origin.x << ' ' << g.origin.y << ' ' << g.origin.z << '\n'
     << "spacing " << g.spacing.x << ' ' << g.spacing.y << ' ' << g.spacing.z << '\n';
  for (double v : g.values) write_le<float>(os, static_cast<float>(v));
}

inline OccupancyGrid read_grid(std::istream& is) {
  std::string line, tag;
  if (!std::getline(is, line) || line != "ARO-GRID v1") throw Error("grid: bad magic line");
  std::array<int, 3> res{};
  Vec3 origin, spacing;
  auto header = [&](const char* name, auto&... fields) {
    if (!std::getline(is, line)) throw Error(std::string("grid: missing ") + name);
    std::istringstream ls(line);
    if (!(ls >> tag) || tag != name || !(ls >> ... >> fields)) throw Error(std::string("grid: malformed ") + name);
  };
  header("resolution", res[0], res[1], res[2]);
  header("origin", origin.x, origin.y, origin.z);
  header("spacing", spacing.x, spacing.y, spacing.z);
  if (!is_finite(origin) || !is_finite(spacing)) throw Error("grid: non-finite header value");
  OccupancyGrid g(res, origin, spacing);
  for (auto& v : g.values) {
    v = read_le<float>(is);
    if (!std::isfinite(v)) throw Error("grid: non-finite value");
  }
  g.validate();
  return g;
}

inline void save_grid(const std::string& path, const OccupancyGrid& g) {
  auto os = io_detail::open_out(path, true);
  write_grid(os, g);
}

inline OccupancyGrid load_grid(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path + "'");
  return read_grid(is);
}

/// Plain PGM (P2), 8-bit, pixel = round(255 * value). The top image row is the largest y.
inline void write_pgm(std::ostream& os, const Grid2D& g) {
  os << "P2\n" << g.nx << ' ' << g.ny << "\n255\n";
  for (int j = g.ny - 1; j >= 0; --j) {
    for (int i = 0; i < g.nx; ++i) {
      const double v = std::clamp(g.at(i, j), 0.0, 1.0);
      os << static_cast<int>(std::lround(255.0 * v)) << (i + 1 < g.nx ? ' ' : '\n');
    }
  }
}

inline void save_pgm(const std::string& path, const Grid2D& g) {
  auto os = io_detail::open_out(path);
  write_pgm(os, g);
}

}  // namespace aro
