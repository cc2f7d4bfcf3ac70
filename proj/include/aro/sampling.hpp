#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "aro/geom.hpp"
#include "aro/rng.hpp"

namespace aro {

/// Area-weighted uniform samples on the mesh surface, deterministic per seed.
inline PointCloud sample_mesh_surface(const TriMesh& mesh, std::size_t n, std::uint64_t seed) {
  if (mesh.empty()) throw Error("sample_mesh_surface: empty mesh");
  std::vector<double> cumulative(mesh.size());
  double total = 0;
  for (std::size_t i = 0; i < mesh.size(); ++i) {
    total += triangle_area(mesh.triangle(i));
    cumulative[i] = total;
  }
  if (!(total > 0)) throw Error("sample_mesh_surface: mesh has zero total area");

  Rng rng(seed);
  PointCloud cloud;
  cloud.points.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double pick = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    const std::size_t tri = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()),
                                                  mesh.size() - 1);
    const Triangle t = mesh.triangle(tri);
    const double su = std::sqrt(rng.uniform());
    const double v = rng.uniform();
    cloud.points.push_back(t[0] * (1 - su) + t[1] * (su * (1 - v)) + t[2] * (su * v));
  }
  return cloud;
}

}  // namespace aro
