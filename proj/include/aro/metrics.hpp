#pragma once

// Reconstruction metrics: Chamfer, Hausdorff, earth mover's distance, occupancy IoU.
//
// Chamfer is the symmetric mean of unsquared nearest-neighbour distances. EMD is the mean edge
// length of an exact minimum-cost perfect matching between equal-size (sub)samples.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "aro/field.hpp"
#include "aro/geom.hpp"
#include "aro/parallel.hpp"
#include "aro/rng.hpp"
#include "aro/sampling.hpp"
#include "aro/spatial.hpp"

namespace aro {

struct MetricReport {
  double cd = 0, hd = 0, emd = 0, iou = 0;
  std::size_t surface_samples = 0;
  std::size_t emd_samples = 0;
  std::size_t iou_samples = 0;
  std::uint64_t seed = 0;
};

/// Distance from each point of `from` to its nearest neighbour in `to`.
inline std::vector<double> nearest_distances(const PointCloud& from, const PointCloud& to) {
  if (from.empty() || to.empty()) throw Error("nearest_distances: empty cloud");
  const SpatialIndex index(to);
  std::vector<double> d(from.size());
  parallel_for(from.size(), [&](std::size_t i) { d[i] = index.nearest(from.points[i]).second; });
  return d;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;  // fixed order
  return s / static_cast<double>(v.size());
}

inline double chamfer(const PointCloud& x, const PointCloud& y) {
  return 0.5 * (mean_of(nearest_distances(x, y)) + mean_of(nearest_distances(y, x)));
}

inline double hausdorff(const PointCloud& x, const PointCloud& y) {
  const auto a = nearest_distances(x, y);
  const auto b = nearest_distances(y, x);
  return std::max(*std::max_element(a.begin(), a.end()), *std::max_element(b.begin(), b.end()));
}

/// Minimum-cost assignment for a square cost matrix (Hungarian method with potentials, O(n^3)).
/// Returns row -> column.
inline std::vector<std::size_t> min_cost_assignment(const std::vector<double>& cost, std::size_t n) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0), v(n + 1, 0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<bool> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<std::size_t> row_to_col(n);
  for (std::size_t j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

namespace metrics_detail {

inline bool lex_less(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(), [](Vec3 p, Vec3 q) {
    if (p.x != q.x) return p.x < q.x;
    if (p.y != q.y) return p.y < q.y;
    return p.z < q.z;
  });
}

inline std::vector<Vec3> subsample(const std::vector<Vec3>& pts, std::size_t n, std::uint64_t seed) {
  if (pts.size() <= n) return pts;
  std::vector<std::size_t> idx(pts.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + rng.below(pts.size() - i)]);
  std::vector<Vec3> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(pts[idx[i]]);
  return out;
}

}  // namespace metrics_detail

inline constexpr std::size_t kEmdMaxPoints = 512;

/// Exact EMD on equal-size seeded subsamples of at most `max_points` points. The arguments are
/// put in a canonical order first, so emd(x, y) == emd(y, x) bit for bit. Both sides draw the
/// same index subset, so a cloud compared with itself gives 0.
inline double emd(const PointCloud& x, const PointCloud& y, std::uint64_t seed = 0,
                  std::size_t max_points = kEmdMaxPoints) {
  if (x.empty() || y.empty()) throw Error("emd: empty cloud");
  const bool swap = metrics_detail::lex_less(y.points, x.points);
  const auto& first = swap ? y.points : x.points;
  const auto& second = swap ? x.points : y.points;
  const auto a = metrics_detail::subsample(first, max_points, derive_seed(seed, 1));
  const auto b = metrics_detail::subsample(second, max_points, derive_seed(seed, 1));
  if (a.size() != b.size())
    throw Error("emd: point counts differ after subsampling (" + std::to_string(a.size()) + " vs " +
                std::to_string(b.size()) + ")");
  const std::size_t n = a.size();
  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = distance(a[i], b[j]);
  const auto match = min_cost_assignment(cost, n);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) total += cost[i * n + match[i]];
  return total / static_cast<double>(n);
}

/// Monte-Carlo IoU of two indicator functions over uniform samples of `domain`; 0/0 is 1.
inline double occupancy_iou(const std::function<bool(Vec3)>& a, const std::function<bool(Vec3)>& b,
                            const Aabb& domain, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error("occupancy_iou: n must be >= 1");
  Rng rng(seed);
  std::size_t both = 0, either = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 p = rng.in_box(domain);
    const bool ia = a(p), ib = b(p);
    both += ia && ib;
    either += ia || ib;
  }
  return either == 0 ? 1.0 : static_cast<double>(both) / static_cast<double>(either);
}

/// IoU of two grids with identical layout, thresholded at `iso`, counted over lattice points.
inline double grid_iou(const OccupancyGrid& a, const OccupancyGrid& b, double iso = kIsoLevel) {
  if (a.res != b.res || !(a.origin == b.origin) || !(a.spacing == b.spacing))
    throw Error("grid_iou: grids have different layouts");
  std::size_t both = 0, either = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const bool ia = a.values[i] > iso, ib = b.values[i] > iso;
    both += ia && ib;
    either += ia || ib;
  }
  return either == 0 ? 1.0 : static_cast<double>(both) / static_cast<double>(either);
}

/// Pixel-count IoU between two 2D grids of the same size.
inline double grid_iou(const Grid2D& a, const Grid2D& b, double iso = kIsoLevel) {
  if (a.nx != b.nx || a.ny != b.ny) throw Error("grid_iou: grids have different sizes");
  std::size_t both = 0, either = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const bool ia = a.values[i] > iso, ib = b.values[i] > iso;
    both += ia && ib;
    either += ia || ib;
  }
  return either == 0 ? 1.0 : static_cast<double>(both) / static_cast<double>(either);
}

}  // namespace aro
