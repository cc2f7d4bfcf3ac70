#pragma once

// Exact radial observations against a watertight mesh, and the occupancy rules they imply:
// interior anchors cover the inside, exterior anchors cover the outside, and mixed anchor sets
// label what they cover and resolve the rest by flood fill.

#include <array>
#include <cstdint>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "aro/anchors.hpp"
#include "aro/bvh.hpp"
#include "aro/geom.hpp"
#include "aro/parallel.hpp"
#include "aro/rng.hpp"
#include "aro/sampling.hpp"

namespace aro {

/// Watertight mesh, its BVH, and the bounding box that clips rays which miss the surface.
class MeshScene {
 public:
  MeshScene(TriMesh mesh, Aabb box) : mesh_(std::move(mesh)), bvh_(mesh_), box_(box) {
    if (!mesh_.watertight) throw Error("MeshScene: mesh must be declared watertight");
  }
  MeshScene(const MeshScene&) = delete;
  MeshScene& operator=(const MeshScene&) = delete;

  const TriMesh& mesh() const { return mesh_; }
  const MeshBvh& bvh() const { return bvh_; }
  const Aabb& box() const { return box_; }

 private:
  TriMesh mesh_;
  MeshBvh bvh_;
  Aabb box_;
};

/// Distance from the anchor to the first surface hit along `direction`, or to the box exit.
inline double radial_depth(const MeshScene& scene, Vec3 anchor, Vec3 direction) {
  const Ray ray(anchor, direction);
  const double exit = ray_aabb_exit(ray, scene.box());
  if (auto t = scene.bvh().first_hit(ray, exit)) return *t;
  return exit;
}

/// True iff x lies in the anchor's visible region: |x - a| < radial depth toward x.
inline bool anchor_covers(const MeshScene& scene, Vec3 anchor, Vec3 x) {
  const Vec3 r = x - anchor;
  const double rn = length(r);
  if (rn == 0) return true;
  return rn < radial_depth(scene, anchor, r / rn);
}

namespace visibility_detail {

// Crossing count along a ray from p, re-cast with perturbed directions when a hit grazes an edge.
inline int robust_crossings(const MeshScene& scene, Vec3 p, Vec3 direction, std::uint64_t stream) {
  Rng rng(derive_seed(0xA11CE, stream));
  Vec3 dir = direction;
  for (int attempt = 0; attempt <= 8; ++attempt) {
    if (auto c = scene.bvh().count_crossings_checked(Ray(p, dir))) return *c;
    dir = normalize(direction + rng.unit_vector() * 0.05);
  }
  throw Error("ray parity: every cast grazed a mesh edge");
}

inline const std::array<Vec3, 3>& parity_directions() {
  static const std::array<Vec3, 3> dirs = [] {
    Rng rng(0x9A217);
    return std::array<Vec3, 3>{rng.unit_vector(), rng.unit_vector(), rng.unit_vector()};
  }();
  return dirs;
}

}  // namespace visibility_detail

/// Ray-parity membership: majority vote over three fixed pseudo-random directions.
inline bool parity_inside(const MeshScene& scene, Vec3 p) {
  int votes = 0;
  const auto& dirs = visibility_detail::parity_directions();
  for (std::size_t i = 0; i < dirs.size(); ++i)
    votes += visibility_detail::robust_crossings(scene, p, dirs[i], i) % 2;
  return votes >= 2;
}

enum class AnchorLabel : std::uint8_t { Interior, Exterior };

inline AnchorLabel classify_anchor(const MeshScene& scene, Vec3 anchor) {
  const int crossings =
      visibility_detail::robust_crossings(scene, anchor, normalize(Vec3{0.5773, 0.2113, 0.7887}), 17);
  return crossings % 2 == 1 ? AnchorLabel::Interior : AnchorLabel::Exterior;
}

/// Anchor positions with their interior/exterior labels.
struct ClassifiedAnchors {
  std::vector<Vec3> positions;
  std::vector<AnchorLabel> labels;

  std::size_t size() const { return positions.size(); }
  bool all(AnchorLabel l) const {
    return std::all_of(labels.begin(), labels.end(), [l](AnchorLabel x) { return x == l; });
  }
  std::size_t count(AnchorLabel l) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), l));
  }
};

inline ClassifiedAnchors classify_anchors(const MeshScene& scene, const AnchorSet& anchors) {
  ClassifiedAnchors out;
  out.positions = anchors.positions;
  for (const auto& a : anchors.positions) {
    if (!scene.box().contains(a)) throw Error("classify_anchors: anchor outside the bounding box");
    out.labels.push_back(classify_anchor(scene, a));
  }
  return out;
}

/// Interior anchors: x is inside iff some anchor covers it.
inline bool oracle_occupancy_interior(const MeshScene& scene, const ClassifiedAnchors& anchors, Vec3 x) {
  if (!anchors.all(AnchorLabel::Interior))
    throw Error("oracle_occupancy_interior: every anchor must be interior");
  for (const auto& a : anchors.positions)
    if (anchor_covers(scene, a, x)) return true;
  return false;
}

/// Exterior anchors: x is inside iff no anchor covers it.
inline bool oracle_occupancy_exterior(const MeshScene& scene, const ClassifiedAnchors& anchors, Vec3 x) {
  if (!anchors.all(AnchorLabel::Exterior))
    throw Error("oracle_occupancy_exterior: every anchor must be exterior");
  for (const auto& a : anchors.positions)
    if (anchor_covers(scene, a, x)) return false;
  return true;
}

enum class CellLabel : std::uint8_t { Unknown = 0, Inside = 1, Outside = 2 };
enum class LabelSource : std::uint8_t { None = 0, CoveredByInterior, CoveredByExterior, ResolvedByFlood };

/// Cell-centred labels over a box split into nx * ny * nz cells.
struct LabeledGrid {
  std::array<int, 3> res{};
  Aabb box;
  std::vector<CellLabel> labels;
  std::vector<LabelSource> sources;

  LabeledGrid() = default;
  LabeledGrid(std::array<int, 3> r, Aabb b) : res(r), box(b) {
    if (r[0] < 1 || r[1] < 1 || r[2] < 1) throw Error("LabeledGrid: resolution must be positive");
    labels.assign(cell_count(), CellLabel::Unknown);
    sources.assign(cell_count(), LabelSource::None);
  }

  std::size_t cell_count() const {
    return static_cast<std::size_t>(res[0]) * static_cast<std::size_t>(res[1]) *
           static_cast<std::size_t>(res[2]);
  }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * static_cast<std::size_t>(res[1]) + static_cast<std::size_t>(j)) *
               static_cast<std::size_t>(res[0]) +
           static_cast<std::size_t>(i);
  }
  std::array<int, 3> coords(std::size_t idx) const {
    const int i = static_cast<int>(idx % static_cast<std::size_t>(res[0]));
    const std::size_t rest = idx / static_cast<std::size_t>(res[0]);
    return {i, static_cast<int>(rest % static_cast<std::size_t>(res[1])),
            static_cast<int>(rest / static_cast<std::size_t>(res[1]))};
  }
  Vec3 cell_size() const {
    const Vec3 e = box.extent();
    return {e.x / res[0], e.y / res[1], e.z / res[2]};
  }
  Vec3 cell_center(int i, int j, int k) const {
    const Vec3 s = cell_size();
    return box.min + Vec3{(i + 0.5) * s.x, (j + 0.5) * s.y, (k + 0.5) * s.z};
  }
  double cell_diagonal() const { return length(cell_size()); }

  /// Label of the cell containing x (clamped to the grid).
  CellLabel label_at(Vec3 x) const {
    const Vec3 s = cell_size();
    std::array<int, 3> c{};
    for (int a = 0; a < 3; ++a)
      c[a] = std::clamp(static_cast<int>(std::floor((x[a] - box.min[a]) / s[a])), 0, res[a] - 1);
    return labels[index(c[0], c[1], c[2])];
  }
  std::size_t count(CellLabel l) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), l));
  }
};

/// Labels every cell of a grid over the scene box from a possibly mixed anchor set. Covered
/// cells take the covering anchor's side (interior anchors are tested first). Remaining cells
/// are grouped into regions connected without crossing the surface; a region touching the box
/// boundary is outside, otherwise it takes the label implied by its labelled neighbours
/// (negated across a crossing). Contradictory or missing evidence throws.
inline LabeledGrid oracle_occupancy_mixed(const MeshScene& scene, const ClassifiedAnchors& anchors,
                                          std::array<int, 3> res) {
  LabeledGrid grid(res, scene.box());
  std::vector<std::size_t> interior, exterior;
  for (std::size_t a = 0; a < anchors.size(); ++a)
    (anchors.labels[a] == AnchorLabel::Interior ? interior : exterior).push_back(a);

  parallel_for(grid.cell_count(), [&](std::size_t idx) {
    const auto [i, j, k] = grid.coords(idx);
    const Vec3 c = grid.cell_center(i, j, k);
    for (auto a : interior) {
      if (anchor_covers(scene, anchors.positions[a], c)) {
        grid.labels[idx] = CellLabel::Inside;
        grid.sources[idx] = LabelSource::CoveredByInterior;
        return;
      }
    }
    for (auto a : exterior) {
      if (anchor_covers(scene, anchors.positions[a], c)) {
        grid.labels[idx] = CellLabel::Outside;
        grid.sources[idx] = LabelSource::CoveredByExterior;
        return;
      }
    }
  });

  // Connected components of unknown cells; adjacency through a surface crossing does not connect.
  constexpr std::array<std::array<int, 3>, 6> kSteps{
      {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};
  auto crosses = [&](std::size_t a, std::size_t b) {
    const auto ca = grid.coords(a), cb = grid.coords(b);
    return scene.bvh().segment_crossings(grid.cell_center(ca[0], ca[1], ca[2]),
                                         grid.cell_center(cb[0], cb[1], cb[2])) %
               2 ==
           1;
  };
  auto neighbour = [&](std::size_t idx, const std::array<int, 3>& step) -> std::optional<std::size_t> {
    auto c = grid.coords(idx);
    for (int a = 0; a < 3; ++a) {
      c[a] += step[a];
      if (c[a] < 0 || c[a] >= grid.res[a]) return std::nullopt;
    }
    return grid.index(c[0], c[1], c[2]);
  };

  constexpr std::uint32_t kNone = ~0u;
  std::vector<std::uint32_t> component(grid.cell_count(), kNone);
  struct Region {
    std::vector<std::size_t> cells;
    bool touches_boundary = false;
    // Each entry: neighbouring cell and whether the adjacency crosses the surface.
    std::vector<std::pair<std::size_t, bool>> contacts;
  };
  std::vector<Region> regions;
  for (std::size_t seed = 0; seed < grid.cell_count(); ++seed) {
    if (grid.labels[seed] != CellLabel::Unknown || component[seed] != kNone) continue;
    const auto id = static_cast<std::uint32_t>(regions.size());
    regions.emplace_back();
    Region& region = regions.back();
    std::queue<std::size_t> open;
    open.push(seed);
    component[seed] = id;
    while (!open.empty()) {
      const std::size_t cur = open.front();
      open.pop();
      region.cells.push_back(cur);
      for (const auto& step : kSteps) {
        const auto nb = neighbour(cur, step);
        if (!nb) {
          region.touches_boundary = true;
          continue;
        }
        const bool crossing = crosses(cur, *nb);
        if (grid.labels[*nb] == CellLabel::Unknown) {
          if (!crossing && component[*nb] == kNone) {
            component[*nb] = id;
            open.push(*nb);
          } else if (crossing) {
            region.contacts.emplace_back(*nb, true);
          }
        } else {
          region.contacts.emplace_back(*nb, crossing);
        }
      }
    }
  }

  auto flip = [](CellLabel l) { return l == CellLabel::Inside ? CellLabel::Outside : CellLabel::Inside; };
  std::vector<bool> resolved(regions.size(), false);
  std::size_t remaining = regions.size();
  bool progress = true;
  while (remaining > 0 && progress) {
    progress = false;
    for (std::size_t r = 0; r < regions.size(); ++r) {
      if (resolved[r]) continue;
      const Region& region = regions[r];
      bool direct[3] = {false, false, false};    // evidence through non-crossing contacts
      bool crossed[3] = {false, false, false};   // evidence through crossing contacts
      for (const auto& [cell, crossing] : region.contacts) {
        const CellLabel l = grid.labels[cell];
        if (l == CellLabel::Unknown) continue;
        (crossing ? crossed : direct)[static_cast<int>(crossing ? flip(l) : l)] = true;
      }
      const int in = static_cast<int>(CellLabel::Inside), out = static_cast<int>(CellLabel::Outside);
      CellLabel decided = CellLabel::Unknown;
      if (region.touches_boundary) {
        if (direct[in]) throw Error("oracle_occupancy_mixed: coverage violated (boundary region touches inside)");
        decided = CellLabel::Outside;
      } else if (direct[in] || direct[out]) {
        if (direct[in] && direct[out])
          throw Error("oracle_occupancy_mixed: coverage violated (region adjacent to inside and outside)");
        decided = direct[in] ? CellLabel::Inside : CellLabel::Outside;
      } else if (crossed[in] || crossed[out]) {
        if (crossed[in] && crossed[out])
          throw Error("oracle_occupancy_mixed: coverage violated (contradictory crossings)");
        decided = crossed[in] ? CellLabel::Inside : CellLabel::Outside;
      } else {
        continue;  // waits for a neighbouring region to resolve
      }
      for (auto c : region.cells) {
        grid.labels[c] = decided;
        grid.sources[c] = LabelSource::ResolvedByFlood;
      }
      resolved[r] = true;
      --remaining;
      progress = true;
    }
  }
  if (remaining > 0) throw Error("oracle_occupancy_mixed: coverage violated (unresolvable region)");
  return grid;
}

/// Fraction of area-uniform surface samples visible from at least one anchor.
inline double coverage_check(const MeshScene& scene, const std::vector<Vec3>& anchors, std::size_t n_samples,
                             std::uint64_t seed) {
  if (n_samples == 0) return 1.0;
  const PointCloud samples = sample_mesh_surface(scene.mesh(), n_samples, seed);
  std::vector<std::uint8_t> covered(n_samples, 0);
  parallel_for(n_samples, [&](std::size_t s) {
    const Vec3 p = samples.points[s];
    for (const auto& a : anchors) {
      const double len = distance(a, p);
      if (len == 0) {
        covered[s] = 1;
        return;
      }
      // Stop just short of the sample so its own triangle does not count as an occluder.
      const double stop = len - 1e-7 * (1.0 + len);
      if (stop <= 0 || !scene.bvh().first_hit(Ray(a, (p - a) / len), stop)) {
        covered[s] = 1;
        return;
      }
    }
  });
  std::size_t count = 0;
  for (auto c : covered) count += c;
  return static_cast<double>(count) / static_cast<double>(n_samples);
}

}  // namespace aro
