#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <tuple>

#include "aro/rng.hpp"
#include "aro/spatial.hpp"

using namespace aro;

namespace {

struct Ranked {
  std::uint32_t index;
  bool in_cone;
  double distance, angle;
};

// Brute-force two-tier ranking over every point. Ranking uses the documented deviation
// (angle_between) so mathematically equal angles tie the same way; the value itself is checked
// against an acos form separately.
std::vector<Ranked> brute_cone(const std::vector<Vec3>& pts, Vec3 apex, Vec3 axis, double half_angle, std::size_t k) {
  std::vector<Ranked> all;
  for (std::uint32_t i = 0; i < pts.size(); ++i) {
    const Vec3 v = pts[i] - apex;
    const double d = std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
    const double ang = axis == Vec3{} ? 0.0 : angle_between(axis, v);
    all.push_back({i, ang <= half_angle, d, ang});
  }
  std::sort(all.begin(), all.end(), [](const Ranked& a, const Ranked& b) {
    if (a.in_cone != b.in_cone) return a.in_cone;
    if (a.in_cone) return std::tie(a.distance, a.index) < std::tie(b.distance, b.index);
    return std::tie(a.angle, a.distance, a.index) < std::tie(b.angle, b.distance, b.index);
  });
  all.resize(std::min(k, all.size()));
  return all;
}

std::vector<Vec3> random_cloud(Rng& rng, std::size_t n) {
  std::vector<Vec3> pts;
  for (std::size_t i = 0; i < n; ++i) pts.push_back(rng.in_ball(0.5));
  return pts;
}

void expect_matches_brute(const SpatialIndex& index, const ConeQuery& q, const std::string& label) {
  const auto got = index.cone_top_k(q);
  const auto want = brute_cone(index.points(), q.apex, q.axis, q.half_angle, q.k);
  ASSERT_EQ(got.size(), want.size()) << label;
  for (std::size_t j = 0; j < got.size(); ++j) {
    ASSERT_EQ(got[j].index, want[j].index) << label << " rank " << j;
    EXPECT_EQ(got[j].in_cone, want[j].in_cone) << label << " rank " << j;
    EXPECT_NEAR(got[j].distance, want[j].distance, 1e-12);
    EXPECT_EQ(got[j].angle, want[j].angle);
    const Vec3 v = got[j].point - q.apex;
    if (!(q.axis == Vec3{}) && length(v) > 0) {
      const double c = dot(v, q.axis) / (length(v) * length(q.axis));
      EXPECT_NEAR(got[j].angle, std::acos(std::clamp(c, -1.0, 1.0)), 1e-7);  // acos is coarse near 0
    }
    EXPECT_EQ(got[j].point, index.points()[got[j].index]);
  }
}

}  // namespace

TEST(Cone, AxisAlignedExample) {
  const SpatialIndex index(PointCloud{{{1, 0, 0}, {2, 0, 0}, {0, 1, 0}}, std::nullopt});
  const auto hits = index.cone_top_k({{0, 0, 0}, {1, 0, 0}, degrees_to_radians(24), 2});
  ASSERT_EQ(hits.size(), 2u);
  EXPECT_EQ(hits[0].point, (Vec3{1, 0, 0}));
  EXPECT_EQ(hits[1].point, (Vec3{2, 0, 0}));
  EXPECT_TRUE(hits[0].in_cone && hits[1].in_cone);
}

TEST(Cone, FallbackFillsToK) {
  const SpatialIndex index(PointCloud{{{1, 0, 0}, {2, 0, 0}, {0, 1, 0}}, std::nullopt});
  const auto hits = index.cone_top_k({{0, 0, 0}, {1, 0, 0}, degrees_to_radians(24), 3});
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(hits[2].point, (Vec3{0, 1, 0}));
  EXPECT_FALSE(hits[2].in_cone);
  EXPECT_NEAR(hits[2].angle, std::numbers::pi / 2, 1e-15);
}

TEST(Cone, ResultLengthIsMinOfKAndN) {
  const SpatialIndex index(PointCloud{{{1, 0, 0}, {2, 0, 0}}, std::nullopt});
  EXPECT_EQ(index.cone_top_k({{0, 0, 0}, {1, 0, 0}, 0.4, 16}).size(), 2u);
}

TEST(Cone, SinglePointCloudAnswersEveryQuery) {
  const SpatialIndex index(PointCloud{{{0.1, 0.2, 0.3}}, std::nullopt});
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto hits = index.cone_top_k({rng.in_ball(0.5), rng.unit_vector(), 0.4, 4});
    ASSERT_EQ(hits.size(), 1u);
    EXPECT_EQ(hits[0].index, 0u);
  }
}

TEST(Cone, RejectsInvalidQueries) {
  const SpatialIndex index(PointCloud{{{0.1, 0.2, 0.3}}, std::nullopt});
  EXPECT_THROW(index.cone_top_k({{}, {1, 0, 0}, 0.0, 1}), Error);
  EXPECT_THROW(index.cone_top_k({{}, {1, 0, 0}, std::numbers::pi / 2, 1}), Error);
  EXPECT_THROW(index.cone_top_k({{}, {1, 0, 0}, 0.4, 0}), Error);
  EXPECT_THROW(SpatialIndex(PointCloud{}), Error);
}

TEST(Cone, ApexCoincidentPointHasZeroAngle) {
  const SpatialIndex index(PointCloud{{{0, 0, 0}, {0, 1, 0}}, std::nullopt});
  const auto hits = index.cone_top_k({{0, 0, 0}, {1, 0, 0}, 0.4, 2});
  EXPECT_EQ(hits[0].index, 0u);
  EXPECT_TRUE(hits[0].in_cone);
  EXPECT_EQ(hits[0].angle, 0.0);
}

TEST(Cone, EveryPointReachable) {
  Rng rng(2);
  const PointCloud cloud{random_cloud(rng, 2048), std::nullopt};
  const SpatialIndex index(cloud);
  for (std::uint32_t i = 0; i < cloud.size(); ++i) {
    const auto hits = index.cone_top_k({cloud.points[i], {}, 0.4, 1});
    ASSERT_EQ(hits[0].index, i);
  }
}

TEST(Cone, MatchesBruteForceOnRandomClouds) {
  Rng rng(3);
  for (int c = 0; c < 4; ++c) {
    const SpatialIndex index(PointCloud{random_cloud(rng, 2048), std::nullopt});
    for (int i = 0; i < 250; ++i) {
      ConeQuery q{rng.in_ball(0.6), rng.unit_vector() * rng.uniform(0.1, 2.0), degrees_to_radians(24), 16};
      if (i % 5 == 0) q.apex = q.apex * 3.0;  // far apex: sparse cones and fallback
      if (i % 7 == 0) q.half_angle = degrees_to_radians(rng.uniform(1, 80));
      if (i % 11 == 0) q.k = 1 + rng.below(64);
      expect_matches_brute(index, q, "cloud " + std::to_string(c) + " query " + std::to_string(i));
    }
  }
}

TEST(Cone, TiesBrokenByIndex) {
  // Lattice points and duplicates give exact distance and angle ties.
  std::vector<Vec3> pts;
  for (int x = -3; x <= 3; ++x)
    for (int y = -3; y <= 3; ++y)
      for (int z = -3; z <= 3; ++z) pts.push_back({x * 0.1, y * 0.1, z * 0.1});
  const auto copy = pts;
  pts.insert(pts.end(), copy.begin(), copy.end());
  const SpatialIndex index(PointCloud{pts, std::nullopt});
  const Vec3 axes[] = {{1, 0, 0}, {0, 0, -1}, {1, 1, 0}, {1, 1, 1}};
  for (const auto& axis : axes)
    for (std::size_t k : {1u, 5u, 16u, 40u, 200u})
      for (const Vec3 apex : {Vec3{0, 0, 0}, Vec3{0.1, 0, 0}, Vec3{-0.3, -0.3, -0.3}, Vec3{1, 1, 1}})
        expect_matches_brute(index, {apex, axis, degrees_to_radians(24), k}, "lattice");
  // Unconstrained (zero-axis) queries rank purely by distance.
  expect_matches_brute(index, {{0.05, 0.05, 0.05}, {}, degrees_to_radians(24), 30}, "zero axis");
}

TEST(Cone, MonotoneInK) {
  Rng rng(5);
  const SpatialIndex index(PointCloud{random_cloud(rng, 1000), std::nullopt});
  for (int i = 0; i < 100; ++i) {
    ConeQuery q{rng.in_ball(1.0), rng.unit_vector(), degrees_to_radians(24), 8};
    const auto small = index.cone_top_k(q);
    q.k = 32;
    const auto big = index.cone_top_k(q);
    for (std::size_t j = 0; j < small.size(); ++j) EXPECT_EQ(small[j], big[j]);
  }
}

TEST(Cone, RotationEquivariant) {
  Rng rng(6);
  const auto pts = random_cloud(rng, 1500);
  // Rotation from a random unit quaternion.
  double qw = rng.normal(), qx = rng.normal(), qy = rng.normal(), qz = rng.normal();
  const double qn = std::sqrt(qw * qw + qx * qx + qy * qy + qz * qz);
  qw /= qn, qx /= qn, qy /= qn, qz /= qn;
  auto rot = [&](Vec3 v) {
    const Vec3 u{qx, qy, qz};
    return v + cross(u, cross(u, v) + v * qw) * 2.0;
  };
  std::vector<Vec3> rotated;
  for (const auto& p : pts) rotated.push_back(rot(p));
  const SpatialIndex a(PointCloud{pts, std::nullopt}), b(PointCloud{rotated, std::nullopt});
  for (int i = 0; i < 200; ++i) {
    const ConeQuery q{rng.in_ball(0.7), rng.unit_vector(), degrees_to_radians(24), 16};
    const auto ha = a.cone_top_k(q);
    const auto hb = b.cone_top_k({rot(q.apex), rot(q.axis), q.half_angle, q.k});
    ASSERT_EQ(ha.size(), hb.size());
    for (std::size_t j = 0; j < ha.size(); ++j) {
      EXPECT_EQ(ha[j].index, hb[j].index);
      EXPECT_NEAR(ha[j].distance, hb[j].distance, 1e-9);
      EXPECT_NEAR(ha[j].angle, hb[j].angle, 1e-9);
    }
  }
}

TEST(Cone, RebuildGivesIdenticalAnswers) {
  Rng rng(7);
  const PointCloud cloud{random_cloud(rng, 500), std::nullopt};
  const SpatialIndex a(cloud), b = build_index(cloud);
  for (int i = 0; i < 50; ++i) {
    const ConeQuery q{rng.in_ball(0.5), rng.unit_vector(), 0.4, 16};
    EXPECT_EQ(a.cone_top_k(q), cone_top_k(b, q));
  }
}

TEST(Nearest, MatchesBruteForceWithIndexTies) {
  Rng rng(8);
  auto pts = random_cloud(rng, 777);
  pts.push_back(pts[10]);  // duplicate: the lower index wins
  const SpatialIndex index(PointCloud{pts, std::nullopt});
  EXPECT_EQ(index.nearest(pts[10]).first, 10u);
  for (int i = 0; i < 500; ++i) {
    const Vec3 p = rng.in_ball(0.8);
    std::uint32_t best = 0;
    for (std::uint32_t j = 1; j < pts.size(); ++j)
      if (distance(p, pts[j]) < distance(p, pts[best])) best = j;
    const auto [idx, d] = index.nearest(p);
    EXPECT_EQ(idx, best);
    EXPECT_DOUBLE_EQ(d, distance(p, pts[best]));
  }
}
