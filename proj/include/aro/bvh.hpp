#pragma once

// Bounding-volume hierarchy over the triangles of a TriMesh.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "aro/geom.hpp"

namespace aro {

class MeshBvh {
 public:
  explicit MeshBvh(const TriMesh& mesh) {
    const std::size_t n = mesh.size();
    tris_.resize(n);
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), 0u);
    std::vector<Vec3> centroids(n);
    for (std::size_t i = 0; i < n; ++i) {
      tris_[i] = mesh.triangle(i);
      centroids[i] = (tris_[i][0] + tris_[i][1] + tris_[i][2]) / 3.0;
    }
    if (n > 0) {
      nodes_.reserve(2 * n);
      nodes_.emplace_back();
      build(0, 0, static_cast<std::uint32_t>(n), centroids);
    }
  }

  /// Nearest hit parameter in (kSelfHitEpsilon, tmax], or nullopt.
  std::optional<double> first_hit(const Ray& ray,
                                  double tmax = std::numeric_limits<double>::infinity()) const {
    std::optional<double> best;
    double limit = tmax;
    traverse(ray, limit, [&](std::uint32_t tri) {
      if (auto t = ray_triangle_intersect(ray, tris_[tri]); t && *t <= limit) {
        limit = *t;
        best = t;
      }
      return false;
    });
    return best;
  }

  /// Number of triangle hits with parameter in (kSelfHitEpsilon, tmax].
  int count_hits(const Ray& ray, double tmax = std::numeric_limits<double>::infinity()) const {
    int count = 0;
    double limit = tmax;
    traverse(ray, limit, [&](std::uint32_t tri) {
      if (auto t = ray_triangle_intersect(ray, tris_[tri]); t && *t <= tmax) ++count;
      return false;
    });
    return count;
  }

  /// Number of distinct hit parameters in (kSelfHitEpsilon, tmax]. Hits within `merge` of each
  /// other count once, so a ray through a shared edge or vertex is one crossing, not several.
  int count_crossings(const Ray& ray, double tmax = std::numeric_limits<double>::infinity(),
                      double merge = 1e-9) const {
    std::vector<double> ts;
    double limit = tmax;
    traverse(ray, limit, [&](std::uint32_t tri) {
      if (auto t = ray_triangle_intersect(ray, tris_[tri]); t && *t <= tmax) ts.push_back(*t);
      return false;
    });
    std::sort(ts.begin(), ts.end());
    int count = 0;
    double last = -std::numeric_limits<double>::infinity();
    for (double t : ts) {
      if (t - last > merge) ++count;
      last = t;
    }
    return count;
  }

  /// Crossing count along the whole ray, or nullopt if any hit lies within `margin` (barycentric)
  /// of a triangle edge, where the count could be ambiguous.
  std::optional<int> count_crossings_checked(const Ray& ray, double margin = 1e-7) const {
    int count = 0;
    bool grazing = false;
    double limit = std::numeric_limits<double>::infinity();
    traverse(ray, limit, [&](std::uint32_t tri) {
      if (auto h = ray_triangle_hit(ray, tris_[tri])) {
        if (h->edge_margin() < margin) {
          grazing = true;
          return true;
        }
        ++count;
      }
      return false;
    });
    if (grazing) return std::nullopt;
    return count;
  }

  /// Number of surface crossings on the open segment a -> b.
  int segment_crossings(Vec3 a, Vec3 b) const {
    const double len = distance(a, b);
    if (len == 0) return 0;
    return count_crossings(Ray(a, (b - a) / len), len);
  }

  bool segment_hits(Vec3 a, Vec3 b) const {
    const double len = distance(a, b);
    if (len == 0) return false;
    return first_hit(Ray(a, (b - a) / len), len).has_value();
  }

  /// Unsigned distance from p to the mesh surface.
  double distance_to_surface(Vec3 p) const {
    if (nodes_.empty()) return std::numeric_limits<double>::infinity();
    double best2 = std::numeric_limits<double>::infinity();
    std::vector<std::uint32_t> stack{0};
    while (!stack.empty()) {
      const Node& node = nodes_[stack.back()];
      stack.pop_back();
      if (box_distance2(node.box, p) >= best2) continue;
      if (node.count > 0) {
        for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
          const Vec3 q = closest_point_on_triangle(p, tris_[order_[i]]);
          best2 = std::min(best2, length_squared(q - p));
        }
      } else {
        const double dl = box_distance2(nodes_[node.left].box, p);
        const double dr = box_distance2(nodes_[node.left + 1].box, p);
        // Push the farther child first so the nearer one is visited next.
        if (dl < dr) {
          stack.push_back(node.left + 1);
          stack.push_back(node.left);
        } else {
          stack.push_back(node.left);
          stack.push_back(node.left + 1);
        }
      }
    }
    return std::sqrt(best2);
  }

 private:
  struct Node {
    Aabb box;
    std::uint32_t left = 0;   // index of left child; right child is left + 1
    std::uint32_t first = 0;  // first entry in order_ for leaves
    std::uint32_t count = 0;  // > 0 for leaves
  };

  static constexpr std::uint32_t kLeafSize = 4;

  static double box_distance2(const Aabb& b, Vec3 p) {
    double d2 = 0;
    for (int a = 0; a < 3; ++a) {
      const double v = std::max({b.min[a] - p[a], 0.0, p[a] - b.max[a]});
      d2 += v * v;
    }
    return d2;
  }

  void build(std::uint32_t slot, std::uint32_t first, std::uint32_t last,
             const std::vector<Vec3>& centroids) {
    Aabb box{tris_[order_[first]][0], tris_[order_[first]][0]};
    Aabb cbox{centroids[order_[first]], centroids[order_[first]]};
    for (std::uint32_t i = first; i < last; ++i) {
      for (const auto& v : tris_[order_[i]]) box.expand(v);
      cbox.expand(centroids[order_[i]]);
    }
    nodes_[slot].box = inflate(box);
    if (last - first <= kLeafSize) {
      nodes_[slot].first = first;
      nodes_[slot].count = last - first;
      return;
    }
    const Vec3 ext = cbox.extent();
    const int axis = ext.x >= ext.y && ext.x >= ext.z ? 0 : (ext.y >= ext.z ? 1 : 2);
    const std::uint32_t mid = first + (last - first) / 2;
    std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + last,
                     [&](std::uint32_t a, std::uint32_t b) {
                       return centroids[a][axis] < centroids[b][axis];
                     });
    const auto left = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
    nodes_.emplace_back();
    nodes_[slot].left = left;
    build(left, first, mid, centroids);
    build(left + 1, mid, last, centroids);
  }

  template <class Visit>
  void traverse(const Ray& ray, double& tmax, Visit&& visit) const {
    if (nodes_.empty()) return;
    const Vec3 inv{1.0 / ray.direction.x, 1.0 / ray.direction.y, 1.0 / ray.direction.z};
    std::uint32_t stack[128];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
      const Node& node = nodes_[stack[--top]];
      if (!ray_aabb_interval(ray.origin, inv, node.box, tmax)) continue;
      if (node.count > 0) {
        for (std::uint32_t i = node.first; i < node.first + node.count; ++i)
          if (visit(order_[i])) return;
      } else {
        stack[top++] = node.left;
        stack[top++] = node.left + 1;
      }
    }
  }

  // Boxes are stored slightly inflated so hits exactly on a box face are never culled.
  static Aabb inflate(const Aabb& b) {
    const double e = 1e-9 * (1.0 + b.diagonal());
    return {b.min - Vec3{e, e, e}, b.max + Vec3{e, e, e}};
  }

  std::vector<Triangle> tris_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace aro
