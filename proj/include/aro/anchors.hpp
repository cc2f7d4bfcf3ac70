#pragma once

// Anchor placement strategies and the ASCII anchor-set format.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "aro/geom.hpp"
#include "aro/rng.hpp"

namespace aro {

enum class AnchorStrategy { LayeredFibonacci, UniformBall, GridSample, Ring2D, Custom };

inline std::string to_string(AnchorStrategy s) {
  switch (s) {
    case AnchorStrategy::LayeredFibonacci: return "fibonacci";
    case AnchorStrategy::UniformBall: return "uniform";
    case AnchorStrategy::GridSample: return "grid";
    case AnchorStrategy::Ring2D: return "ring2d";
    case AnchorStrategy::Custom: return "custom";
  }
  return "custom";
}

inline AnchorStrategy parse_strategy(const std::string& s) {
  if (s == "fibonacci") return AnchorStrategy::LayeredFibonacci;
  if (s == "uniform") return AnchorStrategy::UniformBall;
  if (s == "grid") return AnchorStrategy::GridSample;
  if (s == "ring2d") return AnchorStrategy::Ring2D;
  if (s == "custom") return AnchorStrategy::Custom;
  throw Error("unknown anchor strategy '" + s + "'");
}

/// Fixed anchor positions plus how they were produced. 2D sets (Ring2D) keep z = 0.
struct AnchorSet {
  std::vector<Vec3> positions;
  AnchorStrategy strategy = AnchorStrategy::Custom;
  std::optional<std::uint64_t> seed;

  std::size_t size() const { return positions.size(); }
  bool is_2d() const { return strategy == AnchorStrategy::Ring2D; }
  std::vector<Vec2> positions_2d() const {
    std::vector<Vec2> out;
    out.reserve(positions.size());
    for (const auto& p : positions) out.push_back({p.x, p.y});
    return out;
  }

  static AnchorSet custom(std::vector<Vec3> pts) {
    if (pts.empty()) throw Error("AnchorSet: at least one anchor required");
    return {std::move(pts), AnchorStrategy::Custom, std::nullopt};
  }
};

/// Spherical Fibonacci lattice: z_i = 1 - (2i+1)/m, azimuth_i = i * pi * (3 - sqrt 5).
inline std::vector<Vec3> fibonacci_sphere_directions(std::size_t m) {
  if (m == 0) throw Error("fibonacci_sphere_directions: m must be >= 1");
  const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<Vec3> dirs;
  dirs.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(m);
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = static_cast<double>(i) * golden_angle;
    // Renormalize to keep the norm within rounding of 1.
    dirs.push_back(normalize(Vec3{rho * std::cos(phi), rho * std::sin(phi), z}));
  }
  return dirs;
}

/// Radius for anchor index i under the three-shell schedule 1/2, 1/4, 1/8.
constexpr double layered_radius(std::size_t i) {
  constexpr double radii[3] = {0.5, 0.25, 0.125};
  return radii[i % 3];
}

inline AnchorSet layered_fibonacci(std::size_t m) {
  const auto dirs = fibonacci_sphere_directions(m);
  AnchorSet set{{}, AnchorStrategy::LayeredFibonacci, std::nullopt};
  set.positions.reserve(m);
  for (std::size_t i = 0; i < m; ++i) set.positions.push_back(dirs[i] * layered_radius(i));
  return set;
}

/// m points uniform in the ball of radius 0.5, reproducible per seed.
inline AnchorSet uniform_ball(std::size_t m, std::uint64_t seed) {
  if (m == 0) throw Error("uniform_ball: m must be >= 1");
  Rng rng(seed);
  AnchorSet set{{}, AnchorStrategy::UniformBall, seed};
  set.positions.reserve(m);
  while (set.positions.size() < m) {
    const Vec3 p = rng.in_ball(0.5);
    // A repeated draw has probability ~2^-150; skipping it keeps positions distinct.
    if (std::find(set.positions.begin(), set.positions.end(), p) == set.positions.end())
      set.positions.push_back(p);
  }
  return set;
}

/// The 5x5x5 lattice over {-0.5, -0.25, 0, 0.25, 0.5}^3 in x-fastest order.
inline std::vector<Vec3> anchor_grid_points() {
  std::vector<Vec3> pts;
  pts.reserve(125);
  for (int k = 0; k < 5; ++k)
    for (int j = 0; j < 5; ++j)
      for (int i = 0; i < 5; ++i) pts.push_back({-0.5 + 0.25 * i, -0.5 + 0.25 * j, -0.5 + 0.25 * k});
  return pts;
}

/// Every lattice point with norm <= 0.5 first, then a seeded selection from the rest up to m.
/// For m below the in-sphere count, a seeded subset of the in-sphere points is returned.
inline AnchorSet grid_sample(std::size_t m, std::uint64_t seed) {
  if (m == 0) throw Error("grid_sample: m must be >= 1");
  if (m > 125) throw Error("grid_sample: m must be <= 125 (size of the 5^3 lattice)");
  std::vector<Vec3> inside, outside;
  for (const auto& p : anchor_grid_points())
    (length_squared(p) <= 0.25 + 1e-12 ? inside : outside).push_back(p);

  Rng rng(seed);
  auto shuffle = [&](std::vector<Vec3>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
  };
  AnchorSet set{{}, AnchorStrategy::GridSample, seed};
  if (m <= inside.size()) {
    shuffle(inside);
    set.positions.assign(inside.begin(), inside.begin() + static_cast<std::ptrdiff_t>(m));
  } else {
    shuffle(outside);
    set.positions = inside;
    set.positions.insert(set.positions.end(), outside.begin(),
                         outside.begin() + static_cast<std::ptrdiff_t>(m - inside.size()));
  }
  return set;
}

/// 2D anchors at angle 2*pi*i/m on circles of radius 1/2, 1/4, 1/8 (i mod 3).
inline AnchorSet ring_anchors_2d(std::size_t m) {
  if (m == 0) throw Error("ring_anchors_2d: m must be >= 1");
  AnchorSet set{{}, AnchorStrategy::Ring2D, std::nullopt};
  for (std::size_t i = 0; i < m; ++i) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(m);
    const double r = layered_radius(i);
    set.positions.push_back({r * std::cos(a), r * std::sin(a), 0.0});
  }
  return set;
}

// Format: header "m strategy seed" ("-" when unseeded), then one position per line
// (x y for 2D sets, x y z otherwise), printed with round-trip precision.
inline void write_anchors(std::ostream& os, const AnchorSet& set) {
  os << set.size() << ' ' << to_string(set.strategy) << ' ';
  if (set.seed)
    os << *set.seed;
  else
    os << '-';
  os << '\n' << std::setprecision(17);
  for (const auto& p : set.positions) {
    os << p.x << ' ' << p.y;
    if (!set.is_2d()) os << ' ' << p.z;
    os << '\n';
  }
}

inline AnchorSet read_anchors(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error("anchors: missing header");
  std::istringstream header(line);
  std::size_t m = 0;
  std::string strategy, seed;
  if (!(header >> m >> strategy >> seed) || m == 0) throw Error("anchors: malformed header");
  AnchorSet set;
  set.strategy = parse_strategy(strategy);
  if (seed != "-") set.seed = std::stoull(seed);
  const int dims = set.is_2d() ? 2 : 3;
  while (set.positions.size() < m && std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    Vec3 p;
    if (!(ls >> p.x >> p.y) || (dims == 3 && !(ls >> p.z)))
      throw Error("anchors: malformed position line '" + line + "'");
    if (!is_finite(p)) throw Error("anchors: non-finite coordinate");
    set.positions.push_back(p);
  }
  if (set.positions.size() != m) throw Error("anchors: fewer positions than the header count");
  return set;
}

inline void save_anchors(const std::string& path, const AnchorSet& set) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_anchors(os, set);
}

inline AnchorSet load_anchors(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open '" + path + "'");
  return read_anchors(is);
}

}  // namespace aro
