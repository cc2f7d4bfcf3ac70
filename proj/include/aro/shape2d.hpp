#pragma once

// Closed 2D polygons, hit distances from anchors, and the training-sample generator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "aro/geom.hpp"
#include "aro/io.hpp"
#include "aro/rng.hpp"

namespace aro {

struct Box2D {
  Vec2 min{-0.5, -0.5};
  Vec2 max{0.5, 0.5};

  bool contains(Vec2 p) const { return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y; }
};

inline double signed_area(const std::vector<Vec2>& loop) {
  double a = 0;
  for (std::size_t i = 0; i < loop.size(); ++i) a += cross(loop[i], loop[(i + 1) % loop.size()]);
  return 0.5 * a;
}

namespace shape_detail {

inline bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  auto orient = [](Vec2 p, Vec2 q, Vec2 r) { return cross(q - p, r - p); };
  const double d1 = orient(c, d, a), d2 = orient(c, d, b), d3 = orient(a, b, c), d4 = orient(a, b, d);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
  auto on_segment = [](Vec2 p, Vec2 q, Vec2 r) {
    return std::min(p.x, q.x) <= r.x && r.x <= std::max(p.x, q.x) && std::min(p.y, q.y) <= r.y &&
           r.y <= std::max(p.y, q.y);
  };
  return (d1 == 0 && on_segment(c, d, a)) || (d2 == 0 && on_segment(c, d, b)) ||
         (d3 == 0 && on_segment(a, b, c)) || (d4 == 0 && on_segment(a, b, d));
}

}  // namespace shape_detail

/// Simple closed polygon, counter-clockwise, inside [-0.5, 0.5]^2.
class Shape2D {
 public:
  explicit Shape2D(std::vector<Vec2> loop) : loop_(std::move(loop)) {
    if (loop_.size() < 3) throw Error("Shape2D: need at least 3 vertices");
    for (const auto& p : loop_) {
      if (!is_finite(p)) throw Error("Shape2D: non-finite vertex");
      if (std::abs(p.x) > 0.5 || std::abs(p.y) > 0.5) throw Error("Shape2D: vertex outside [-0.5, 0.5]^2");
    }
    if (signed_area(loop_) < 0) std::reverse(loop_.begin(), loop_.end());
    const std::size_t n = loop_.size();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (j == i + 1 || (i == 0 && j == n - 1)) continue;  // adjacent edges share a vertex
        if (shape_detail::segments_intersect(loop_[i], loop_[(i + 1) % n], loop_[j], loop_[(j + 1) % n]))
          throw Error("Shape2D: polygon is self-intersecting");
      }
    }
  }

  const std::vector<Vec2>& vertices() const { return loop_; }
  std::size_t size() const { return loop_.size(); }
  std::pair<Vec2, Vec2> edge(std::size_t i) const { return {loop_[i], loop_[(i + 1) % loop_.size()]}; }

  /// Even-odd point-in-polygon.
  bool contains(Vec2 p) const {
    bool inside = false;
    for (std::size_t i = 0, j = loop_.size() - 1; i < loop_.size(); j = i++) {
      const Vec2 a = loop_[i], b = loop_[j];
      if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x) inside = !inside;
    }
    return inside;
  }

  double perimeter() const {
    double s = 0;
    for (std::size_t i = 0; i < loop_.size(); ++i) s += distance(loop_[i], loop_[(i + 1) % loop_.size()]);
    return s;
  }

 private:
  std::vector<Vec2> loop_;
};

inline Shape2D make_disk_shape(double radius, int segments = 256, Vec2 center = {}) {
  std::vector<Vec2> v;
  for (int i = 0; i < segments; ++i) {
    const double a = 2.0 * std::numbers::pi * i / segments;
    v.push_back({center.x + radius * std::cos(a), center.y + radius * std::sin(a)});
  }
  return Shape2D(std::move(v));
}

/// Block letter "G": a thick frame open on the upper right with an inward bar.
inline Shape2D make_letter_g_shape() {
  return Shape2D({{-0.35, -0.4},
                  {0.35, -0.4},
                  {0.35, 0.05},
                  {0.05, 0.05},
                  {0.05, -0.07},
                  {0.23, -0.07},
                  {0.23, -0.28},
                  {-0.23, -0.28},
                  {-0.23, 0.28},
                  {0.35, 0.28},
                  {0.35, 0.4},
                  {-0.35, 0.4}});
}

/// Ray parameter of the first polygon-edge hit from `origin` along unit `dir`, if any.
inline std::optional<double> ray_polygon_hit(const Shape2D& shape, Vec2 origin, Vec2 dir) {
  std::optional<double> best;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    const auto [a, b] = shape.edge(i);
    const Vec2 e = b - a;
    const double denom = cross(dir, e);
    if (denom == 0) continue;  // parallel
    const Vec2 w = a - origin;
    const double t = cross(w, e) / denom;
    const double s = cross(w, dir) / denom;
    if (s < 0 || s > 1 || t < kSelfHitEpsilon) continue;
    if (!best || t < *best) best = t;
  }
  return best;
}

inline double ray_box_exit_2d(Vec2 origin, Vec2 dir, const Box2D& box) {
  if (!box.contains(origin)) throw Error("ray_box_exit_2d: origin outside box");
  double t = std::numeric_limits<double>::infinity();
  if (dir.x > 0) t = std::min(t, (box.max.x - origin.x) / dir.x);
  if (dir.x < 0) t = std::min(t, (box.min.x - origin.x) / dir.x);
  if (dir.y > 0) t = std::min(t, (box.max.y - origin.y) / dir.y);
  if (dir.y < 0) t = std::min(t, (box.min.y - origin.y) / dir.y);
  return t;
}

/// Distance from the anchor to the first boundary crossing on the ray toward x, clipped by the box.
inline double hit_distance_2d(const Shape2D& shape, Vec2 anchor, Vec2 x, const Box2D& box = {}) {
  const Vec2 r = x - anchor;
  const double rn = length(r);
  if (rn == 0) throw Error("hit_distance_2d: query coincides with the anchor");
  const Vec2 dir = r / rn;
  const double exit = ray_box_exit_2d(anchor, dir, box);
  if (auto t = ray_polygon_hit(shape, anchor, dir); t && *t <= exit) return *t;
  return exit;
}

struct AroFeature2D {
  Vec2 r;
  double r_norm = 0;
  double d = 0;
};

inline std::vector<AroFeature2D> features_2d(const Shape2D& shape, const std::vector<Vec2>& anchors, Vec2 x,
                                             const Box2D& box = {}) {
  if (anchors.empty()) throw Error("features_2d: empty anchor set");
  std::vector<AroFeature2D> out;
  out.reserve(anchors.size());
  for (const auto& a : anchors) {
    const Vec2 r = x - a;
    out.push_back({r, length(r), hit_distance_2d(shape, a, x, box)});
  }
  return out;
}

struct Sample2D {
  Vec2 x;
  int label = 0;
};

/// Half the samples uniform in the box, half in a Gaussian band (sigma) around the boundary.
/// Labels come from exact point-in-polygon tests.
inline std::vector<Sample2D> generate_samples_2d(const Shape2D& shape, std::size_t n, std::uint64_t seed,
                                                 double band_sigma = 0.03, const Box2D& box = {}) {
  Rng rng(seed);
  std::vector<double> cumulative;
  double total = 0;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    const auto [a, b] = shape.edge(i);
    total += distance(a, b);
    cumulative.push_back(total);
  }
  std::vector<Sample2D> out;
  out.reserve(n);
  while (out.size() < n) {
    Vec2 p;
    if (out.size() % 2 == 0) {
      p = {rng.uniform(box.min.x, box.max.x), rng.uniform(box.min.y, box.max.y)};
    } else {
      const double pick = rng.uniform() * total;
      const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
      const std::size_t e = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), shape.size() - 1);
      const auto [a, b] = shape.edge(e);
      const double s = rng.uniform();
      p = a + (b - a) * s + Vec2{rng.normal() * band_sigma, rng.normal() * band_sigma};
      if (!box.contains(p)) continue;
    }
    out.push_back({p, shape.contains(p) ? 1 : 0});
  }
  return out;
}

// Shape file: one "x y" vertex per line; the loop closes implicitly.
inline Shape2D read_shape(std::istream& is) {
  std::vector<Vec2> v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string a, b;
    if (!(ls >> a) || a[0] == '#') continue;
    if (!(ls >> b)) throw Error("shape line " + std::to_string(lineno) + ": expected two coordinates");
    const std::string where = "shape line " + std::to_string(lineno);
    v.push_back({io_detail::parse_real(a, where), io_detail::parse_real(b, where)});
  }
  return Shape2D(std::move(v));
}

inline void write_shape(std::ostream& os, const Shape2D& s) {
  os << std::setprecision(17);
  for (const auto& p : s.vertices()) os << p.x << ' ' << p.y << '\n';
}

inline Shape2D load_shape(const std::string& path) {
  auto is = io_detail::open_in(path);
  return read_shape(is);
}

}  // namespace aro
