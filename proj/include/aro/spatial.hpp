#pragma once

// Exact conical top-k and nearest-neighbour queries over an immutable point cloud.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <queue>
#include <vector>

#include "aro/geom.hpp"

namespace aro {

inline constexpr double kDefaultHalfAngleDeg = 24.0;
inline constexpr std::size_t kDefaultK = 16;

constexpr double degrees_to_radians(double deg) { return deg * std::numbers::pi / 180.0; }

/// Cone with apex at an anchor and axis toward the query. A zero axis means an unconstrained
/// k-nearest query: every point counts as in-cone with angular deviation 0.
struct ConeQuery {
  Vec3 apex;
  Vec3 axis;
  double half_angle = degrees_to_radians(kDefaultHalfAngleDeg);
  std::size_t k = kDefaultK;

  void validate() const {
    if (!(half_angle > 0 && half_angle < std::numbers::pi / 2))
      throw Error("ConeQuery: half_angle must lie in (0, pi/2)");
    if (k == 0) throw Error("ConeQuery: k must be >= 1");
    if (!is_finite(apex) || !is_finite(axis)) throw Error("ConeQuery: non-finite apex or axis");
  }
  bool unconstrained() const { return axis == Vec3{}; }
};

struct ConeHit {
  std::uint32_t index = 0;  // position in the source cloud
  Vec3 point;
  double distance = 0;  // to apex
  double angle = 0;     // deviation from the axis, radians
  bool in_cone = false;  // tier 1; false for fallback padding

  friend bool operator==(const ConeHit&, const ConeHit&) = default;
};

/// Angular deviation of `p` seen from the apex. Shared by every query path so rankings agree
/// bit for bit.
inline double cone_angle(const ConeQuery& q, Vec3 p) {
  if (q.unconstrained()) return 0.0;
  return angle_between(q.axis, p - q.apex);
}

inline ConeHit make_cone_hit(const ConeQuery& q, std::uint32_t index, Vec3 p) {
  const double angle = cone_angle(q, p);
  return {index, p, distance(p, q.apex), angle, angle <= q.half_angle};
}

/// Ranking: in-cone points by distance, then fallback points by angle, then distance.
/// Exact ties fall back to the point index.
inline bool cone_rank_less(const ConeHit& a, const ConeHit& b) {
  if (a.in_cone != b.in_cone) return a.in_cone;
  if (a.in_cone) {
    if (a.distance != b.distance) return a.distance < b.distance;
  } else {
    if (a.angle != b.angle) return a.angle < b.angle;
    if (a.distance != b.distance) return a.distance < b.distance;
  }
  return a.index < b.index;
}

/// kd-tree over a point cloud. Query answers are exact and independent of the tree layout.
class SpatialIndex {
 public:
  explicit SpatialIndex(const PointCloud& cloud) : points_(cloud.points) {
    if (points_.empty()) throw Error("SpatialIndex: empty cloud");
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0u);
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    nodes_.emplace_back();
    build(0, 0, static_cast<std::uint32_t>(points_.size()));
  }

  std::size_t size() const { return points_.size(); }
  const std::vector<Vec3>& points() const { return points_; }

  /// The min(k, n) best points under cone_rank_less.
  std::vector<ConeHit> cone_top_k(const ConeQuery& q) const {
    q.validate();
    const std::size_t want = std::min(q.k, points_.size());
    std::vector<ConeHit> in_cone = collect_in_cone(q, want);
    if (in_cone.size() < want) {
      auto fallback = collect_fallback(q, want - in_cone.size());
      in_cone.insert(in_cone.end(), fallback.begin(), fallback.end());
    }
    return in_cone;
  }

  /// Nearest point to p (ties by index) and its distance.
  std::pair<std::uint32_t, double> nearest(Vec3 p) const {
    std::uint32_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    std::vector<std::uint32_t> stack{0};
    while (!stack.empty()) {
      const Node& node = nodes_[stack.back()];
      stack.pop_back();
      if (box_distance2(node.box, p) > best_d2) continue;
      if (node.count > 0) {
        for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
          const std::uint32_t idx = order_[i];
          const double d2 = length_squared(points_[idx] - p);
          if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
            best_d2 = d2;
            best = idx;
          }
        }
      } else {
        const double dl = box_distance2(nodes_[node.left].box, p);
        const double dr = box_distance2(nodes_[node.left + 1].box, p);
        if (dl < dr) {
          stack.push_back(node.left + 1);
          stack.push_back(node.left);
        } else {
          stack.push_back(node.left);
          stack.push_back(node.left + 1);
        }
      }
    }
    return {best, std::sqrt(best_d2)};
  }

 private:
  struct Node {
    Aabb box;
    Vec3 sphere_center;
    double sphere_radius = 0;
    std::uint32_t left = 0;
    std::uint32_t first = 0;
    std::uint32_t count = 0;
  };

  static constexpr std::uint32_t kLeafSize = 8;
  // Relative slack on pruning bounds so rounding never discards a tie.
  static constexpr double kSlack = 1e-12;

  static double box_distance2(const Aabb& b, Vec3 p) {
    double d2 = 0;
    for (int a = 0; a < 3; ++a) {
      const double v = std::max({b.min[a] - p[a], 0.0, p[a] - b.max[a]});
      d2 += v * v;
    }
    return d2;
  }

  void build(std::uint32_t slot, std::uint32_t first, std::uint32_t last) {
    Aabb box{points_[order_[first]], points_[order_[first]]};
    for (std::uint32_t i = first; i < last; ++i) box.expand(points_[order_[i]]);
    Node& node = nodes_[slot];
    node.box = box;
    node.sphere_center = box.center();
    node.sphere_radius = 0.5 * box.diagonal();
    if (last - first <= kLeafSize) {
      node.first = first;
      node.count = last - first;
      return;
    }
    const Vec3 ext = box.extent();
    const int axis = ext.x >= ext.y && ext.x >= ext.z ? 0 : (ext.y >= ext.z ? 1 : 2);
    const std::uint32_t mid = first + (last - first) / 2;
    std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + last,
                     [&](std::uint32_t a, std::uint32_t b) {
                       return points_[a][axis] < points_[b][axis];
                     });
    const auto left = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
    nodes_.emplace_back();
    nodes_[slot].left = left;
    build(left, first, mid);
    build(left + 1, mid, last);
  }

  // Lower bound on the angular deviation of any point in the node.
  static double angle_lower_bound(const ConeQuery& q, const Node& node) {
    if (q.unconstrained()) return 0.0;
    const Vec3 to_center = node.sphere_center - q.apex;
    const double d = length(to_center);
    if (d <= node.sphere_radius * (1 + kSlack) + 1e-15) return 0.0;
    const double spread = std::asin(std::min(1.0, node.sphere_radius / d));
    return std::max(0.0, angle_between(q.axis, to_center) - spread - 1e-12);
  }

  template <class Key, class Accept>
  std::vector<ConeHit> best_first(const ConeQuery& q, std::size_t want, Key node_key,
                                  Accept accept) const {
    // Max-heap of the current best `want` hits; top is the worst kept.
    std::vector<ConeHit> kept;
    auto worse = [](const ConeHit& a, const ConeHit& b) { return cone_rank_less(a, b); };
    using Entry = std::pair<double, std::uint32_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
    open.push({node_key(nodes_[0]), 0});
    while (!open.empty()) {
      const auto [bound, id] = open.top();
      open.pop();
      if (kept.size() == want && bound > bound_of(kept.front(), node_key) * (1 + kSlack) + 1e-15)
        break;
      const Node& node = nodes_[id];
      if (node.count > 0) {
        for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
          const ConeHit hit = make_cone_hit(q, order_[i], points_[order_[i]]);
          if (!accept(hit)) continue;
          if (kept.size() < want) {
            kept.push_back(hit);
            std::push_heap(kept.begin(), kept.end(), worse);
          } else if (cone_rank_less(hit, kept.front())) {
            std::pop_heap(kept.begin(), kept.end(), worse);
            kept.back() = hit;
            std::push_heap(kept.begin(), kept.end(), worse);
          }
        }
      } else {
        for (std::uint32_t c : {node.left, node.left + 1}) {
          const double b = node_key(nodes_[c]);
          if (std::isfinite(b)) open.push({b, c});
        }
      }
    }
    std::sort(kept.begin(), kept.end(), cone_rank_less);
    return kept;
  }

  // Per-hit value comparable to a node key (distance for tier 1, angle for tier 2).
  template <class Key>
  static double bound_of(const ConeHit& h, const Key&) {
    return Key::in_cone_phase ? h.distance : h.angle;
  }

  struct DistanceKey {
    static constexpr bool in_cone_phase = true;
    const ConeQuery* q;
    double operator()(const Node& n) const {
      if (angle_lower_bound(*q, n) > q->half_angle) return std::numeric_limits<double>::infinity();
      return std::sqrt(box_distance2(n.box, q->apex));
    }
  };

  struct AngleKey {
    static constexpr bool in_cone_phase = false;
    const ConeQuery* q;
    double operator()(const Node& n) const { return angle_lower_bound(*q, n); }
  };

  std::vector<ConeHit> collect_in_cone(const ConeQuery& q, std::size_t want) const {
    return best_first(q, want, DistanceKey{&q}, [](const ConeHit& h) { return h.in_cone; });
  }

  std::vector<ConeHit> collect_fallback(const ConeQuery& q, std::size_t want) const {
    return best_first(q, want, AngleKey{&q}, [](const ConeHit& h) { return !h.in_cone; });
  }

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

/// Free-function form of SpatialIndex::cone_top_k.
inline std::vector<ConeHit> cone_top_k(const SpatialIndex& index, const ConeQuery& q) {
  return index.cone_top_k(q);
}

inline SpatialIndex build_index(const PointCloud& cloud) { return SpatialIndex(cloud); }

}  // namespace aro
