#pragma once

// Core geometric types and exact ray/primitive predicates.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace aro {

/// Error raised by every aro operation on a violated precondition or bad input.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Vec3 {
  double x = 0, y = 0, z = 0;

  constexpr double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  friend constexpr Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend constexpr Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend constexpr Vec3 operator-(Vec3 a) { return {-a.x, -a.y, -a.z}; }
  friend constexpr Vec3 operator*(Vec3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }
  friend constexpr Vec3 operator*(double s, Vec3 a) { return a * s; }
  friend constexpr Vec3 operator/(Vec3 a, double s) { return {a.x / s, a.y / s, a.z / s}; }
  constexpr Vec3& operator+=(Vec3 b) { return *this = *this + b; }
  constexpr Vec3& operator-=(Vec3 b) { return *this = *this - b; }
  friend constexpr bool operator==(Vec3 a, Vec3 b) = default;
};

struct Vec2 {
  double x = 0, y = 0;

  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return a * s; }
  friend constexpr Vec2 operator/(Vec2 a, double s) { return {a.x / s, a.y / s}; }
  friend constexpr bool operator==(Vec2 a, Vec2 b) = default;
};

constexpr double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double length(Vec3 a) { return std::sqrt(dot(a, a)); }
constexpr double length_squared(Vec3 a) { return dot(a, a); }
inline double distance(Vec3 a, Vec3 b) { return length(a - b); }
inline Vec3 normalize(Vec3 a) {
  const double l = length(a);
  if (!(l > 0)) throw Error("normalize: zero-length vector");
  return a / l;
}
inline Vec3 component_min(Vec3 a, Vec3 b) {
  return {std::min(a.x, b.x), std::min(a.y, b.y), std::min(a.z, b.z)};
}
inline Vec3 component_max(Vec3 a, Vec3 b) {
  return {std::max(a.x, b.x), std::max(a.y, b.y), std::max(a.z, b.z)};
}
inline bool is_finite(Vec3 a) {
  return std::isfinite(a.x) && std::isfinite(a.y) && std::isfinite(a.z);
}

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double length(Vec2 a) { return std::sqrt(dot(a, a)); }
inline double distance(Vec2 a, Vec2 b) { return length(a - b); }
inline bool is_finite(Vec2 a) { return std::isfinite(a.x) && std::isfinite(a.y); }

/// Angle in [0, pi] between `v` and `axis`; 0 when `v` is the zero vector.
inline double angle_between(Vec3 axis, Vec3 v) {
  const double c = length(cross(axis, v));
  const double d = dot(axis, v);
  if (c == 0 && d == 0) return 0.0;
  return std::atan2(c, d);
}

// Hits closer than this to the ray origin are treated as self-intersections.
inline constexpr double kSelfHitEpsilon = 1e-9;

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit length

  Ray() = default;
  Ray(Vec3 o, Vec3 d) : origin(o), direction(d) {
    if (std::abs(length(d) - 1.0) > 1e-9) throw Error("Ray: direction must be unit length");
  }
  Vec3 at(double t) const { return origin + direction * t; }
};

struct Aabb {
  Vec3 min;
  Vec3 max;

  Aabb() = default;
  Aabb(Vec3 lo, Vec3 hi) : min(lo), max(hi) {
    if (lo.x > hi.x || lo.y > hi.y || lo.z > hi.z) throw Error("Aabb: min exceeds max");
  }
  static Aabb cube(double half) { return {{-half, -half, -half}, {half, half, half}}; }

  Vec3 extent() const { return max - min; }
  Vec3 center() const { return (min + max) * 0.5; }
  double diagonal() const { return length(extent()); }
  bool contains(Vec3 p) const {
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z &&
           p.z <= max.z;
  }
  void expand(Vec3 p) {
    min = component_min(min, p);
    max = component_max(max, p);
  }
};

inline Aabb bounds_of(const std::vector<Vec3>& pts) {
  if (pts.empty()) throw Error("bounds_of: empty point set");
  Aabb b{pts.front(), pts.front()};
  for (const auto& p : pts) b.expand(p);
  return b;
}

using Triangle = std::array<Vec3, 3>;

/// Indexed triangle mesh. `watertight` is a declared flag validated on construction.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  bool watertight = false;

  TriMesh() = default;
  TriMesh(std::vector<Vec3> v, std::vector<std::array<std::uint32_t, 3>> t, bool declare_watertight)
      : vertices(std::move(v)), triangles(std::move(t)), watertight(declare_watertight) {
    validate();
  }

  Triangle triangle(std::size_t i) const {
    const auto& f = triangles[i];
    return {vertices[f[0]], vertices[f[1]], vertices[f[2]]};
  }
  std::size_t size() const { return triangles.size(); }
  bool empty() const { return triangles.empty(); }

  void validate() const {
    for (const auto& v : vertices)
      if (!is_finite(v)) throw Error("TriMesh: non-finite vertex");
    for (const auto& f : triangles)
      for (auto i : f)
        if (i >= vertices.size()) throw Error("TriMesh: vertex index out of range");
    if (watertight && !is_edge_manifold_closed())
      throw Error("TriMesh: declared watertight but some edge is not shared by exactly two triangles");
  }

  /// True iff every undirected edge is shared by exactly two triangles.
  bool is_edge_manifold_closed() const {
    if (triangles.empty()) return false;
    std::map<std::pair<std::uint32_t, std::uint32_t>, int> count;
    for (const auto& f : triangles) {
      for (int e = 0; e < 3; ++e) {
        auto a = f[e], b = f[(e + 1) % 3];
        if (a > b) std::swap(a, b);
        ++count[{a, b}];
      }
    }
    return std::all_of(count.begin(), count.end(), [](const auto& kv) { return kv.second == 2; });
  }

  Aabb bounds() const { return bounds_of(vertices); }
};

struct Normalization {
  double scale = 1.0;  // p' = (p - offset) * scale
  Vec3 offset;

  Vec3 apply(Vec3 p) const { return (p - offset) * scale; }
  Vec3 invert(Vec3 p) const { return p / scale + offset; }
};

struct PointCloud {
  std::vector<Vec3> points;
  std::optional<Normalization> normalization;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Centers the cloud at its centroid and scales so the farthest point lies at radius 0.5.
inline PointCloud normalize_to_unit_sphere(const PointCloud& cloud) {
  if (cloud.empty()) throw Error("normalize_to_unit_sphere: empty cloud");
  Vec3 c;
  for (const auto& p : cloud.points) c += p;
  c = c / static_cast<double>(cloud.size());
  double rmax = 0;
  for (const auto& p : cloud.points) rmax = std::max(rmax, length(p - c));
  if (!(rmax > 0)) throw Error("normalize_to_unit_sphere: degenerate cloud (all points identical)");

  Normalization n{0.5 / rmax, c};
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(n.apply(p));
  // Compose with any earlier transform so the record always maps original -> current.
  if (cloud.normalization) {
    const auto& prev = *cloud.normalization;
    out.normalization = Normalization{prev.scale * n.scale, prev.offset + c / prev.scale};
  } else {
    out.normalization = n;
  }
  return out;
}

/// Applies a recorded normalization to a mesh so it stays aligned with its cloud.
inline TriMesh apply_normalization(const TriMesh& mesh, const Normalization& n) {
  TriMesh out = mesh;
  for (auto& v : out.vertices) v = n.apply(v);
  return out;
}

struct TriangleHit {
  double t = 0;
  double u = 0, v = 0;  // barycentric weights of vertices 1 and 2

  /// Smallest barycentric coordinate: 0 on an edge, 1/3 at the centroid.
  double edge_margin() const { return std::min({u, v, 1.0 - u - v}); }
};

// Barycentric slack so a ray through a shared edge cannot slip between both triangles on rounding.
inline constexpr double kEdgeTolerance = 1e-10;

/// Möller–Trumbore with barycentrics; edges inclusive, hits below kSelfHitEpsilon discarded.
inline std::optional<TriangleHit> ray_triangle_hit(const Ray& ray, const Triangle& tri) {
  const Vec3 e1 = tri[1] - tri[0];
  const Vec3 e2 = tri[2] - tri[0];
  const Vec3 p = cross(ray.direction, e2);
  const double det = dot(e1, p);
  const double scale = length(e1) * length(e2);
  if (scale == 0 || !(std::abs(det) > 1e-14 * scale)) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 s = ray.origin - tri[0];
  const double u = dot(s, p) * inv;
  if (u < -kEdgeTolerance || u > 1.0 + kEdgeTolerance) return std::nullopt;
  const Vec3 q = cross(s, e1);
  const double v = dot(ray.direction, q) * inv;
  if (v < -kEdgeTolerance || u + v > 1.0 + kEdgeTolerance) return std::nullopt;
  const double t = dot(e2, q) * inv;
  if (t < kSelfHitEpsilon) return std::nullopt;
  return TriangleHit{t, u, v};
}

/// Smallest t >= 0 (beyond the self-hit guard) where the ray meets the triangle, edges included.
inline std::optional<double> ray_triangle_intersect(const Ray& ray, const Triangle& tri) {
  if (auto h = ray_triangle_hit(ray, tri)) return h->t;
  return std::nullopt;
}

/// Parameter where a ray starting inside `box` leaves it.
inline double ray_aabb_exit(const Ray& ray, const Aabb& box) {
  if (!box.contains(ray.origin)) throw Error("ray_aabb_exit: ray origin outside box");
  double t = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double d = ray.direction[a];
    if (d > 0)
      t = std::min(t, (box.max[a] - ray.origin[a]) / d);
    else if (d < 0)
      t = std::min(t, (box.min[a] - ray.origin[a]) / d);
  }
  return t;
}

/// Slab test: entry/exit interval of a ray against a box, nullopt if disjoint.
inline std::optional<std::pair<double, double>> ray_aabb_interval(Vec3 origin, Vec3 inv_dir,
                                                                    const Aabb& box, double tmax) {
  double t0 = 0, t1 = tmax;
  for (int a = 0; a < 3; ++a) {
    double lo = (box.min[a] - origin[a]) * inv_dir[a];
    double hi = (box.max[a] - origin[a]) * inv_dir[a];
    if (lo > hi) std::swap(lo, hi);
    // NaN (0 * inf) means the ray lies in the slab plane; treat as unbounded on this axis.
    if (!std::isnan(lo)) t0 = std::max(t0, lo);
    if (!std::isnan(hi)) t1 = std::min(t1, hi);
    if (t0 > t1) return std::nullopt;
  }
  return std::make_pair(t0, t1);
}

inline double triangle_area(const Triangle& t) {
  return 0.5 * length(cross(t[1] - t[0], t[2] - t[0]));
}

/// Closest point on a triangle to p (Ericson, Real-Time Collision Detection, 5.1.5).
inline Vec3 closest_point_on_triangle(Vec3 p, const Triangle& t) {
  const Vec3 a = t[0], b = t[1], c = t[2];
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = dot(ab, ap), d2 = dot(ac, ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vec3 bp = p - b;
  const double d3 = dot(ab, bp), d4 = dot(ac, bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + ab * (d1 / (d1 - d3));
  const Vec3 cp = p - c;
  const double d5 = dot(ab, cp), d6 = dot(ac, cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + ac * (d2 / (d2 - d6));
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0)
    return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

}  // namespace aro
