#pragma once

// Watertight reference meshes with known analytic interiors.

#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <utility>
#include <vector>

#include "aro/geom.hpp"

namespace aro {

/// Icosahedron subdivided `levels` times, vertices projected onto a sphere.
inline TriMesh make_icosphere(double radius, int levels, Vec3 center = {}) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
                         {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
                         {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  std::vector<std::array<std::uint32_t, 3>> f = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
      {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (auto& p : v) p = normalize(p);

  for (int level = 0; level < levels; ++level) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> midpoint;
    auto mid = [&](std::uint32_t a, std::uint32_t b) {
      const auto key = std::minmax(a, b);
      if (auto it = midpoint.find(key); it != midpoint.end()) return it->second;
      v.push_back(normalize(v[a] + v[b]));
      const auto idx = static_cast<std::uint32_t>(v.size() - 1);
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<std::uint32_t, 3>> next;
    next.reserve(f.size() * 4);
    for (const auto& tri : f) {
      const auto ab = mid(tri[0], tri[1]), bc = mid(tri[1], tri[2]), ca = mid(tri[2], tri[0]);
      next.push_back({tri[0], ab, ca});
      next.push_back({tri[1], bc, ab});
      next.push_back({tri[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    f = std::move(next);
  }
  for (auto& p : v) p = center + p * radius;
  return TriMesh(std::move(v), std::move(f), true);
}

/// Axis-aligned cube [-half, half]^3 (12 triangles, outward winding).
inline TriMesh make_cube(double half) {
  std::vector<Vec3> v;
  for (int i = 0; i < 8; ++i)
    v.push_back({(i & 1) ? half : -half, (i & 2) ? half : -half, (i & 4) ? half : -half});
  std::vector<std::array<std::uint32_t, 3>> f = {
      {0, 2, 1}, {1, 2, 3},  // z-
      {4, 5, 6}, {5, 7, 6},  // z+
      {0, 1, 4}, {1, 5, 4},  // y-
      {2, 6, 3}, {3, 6, 7},  // y+
      {0, 4, 2}, {2, 4, 6},  // x-
      {1, 3, 5}, {3, 7, 5}};  // x+
  return TriMesh(std::move(v), std::move(f), true);
}

/// Torus around the z axis with ring radius `major` and tube radius `minor`.
inline TriMesh make_torus(double major, double minor, int ring_segments, int tube_segments) {
  std::vector<Vec3> v;
  v.reserve(static_cast<std::size_t>(ring_segments * tube_segments));
  for (int i = 0; i < ring_segments; ++i) {
    const double phi = 2.0 * std::numbers::pi * i / ring_segments;
    for (int j = 0; j < tube_segments; ++j) {
      const double theta = 2.0 * std::numbers::pi * j / tube_segments;
      const double rho = major + minor * std::cos(theta);
      v.push_back({rho * std::cos(phi), rho * std::sin(phi), minor * std::sin(theta)});
    }
  }
  auto id = [&](int i, int j) {
    return static_cast<std::uint32_t>((i % ring_segments) * tube_segments + (j % tube_segments));
  };
  std::vector<std::array<std::uint32_t, 3>> f;
  for (int i = 0; i < ring_segments; ++i) {
    for (int j = 0; j < tube_segments; ++j) {
      f.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      f.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return TriMesh(std::move(v), std::move(f), true);
}

}  // namespace aro
