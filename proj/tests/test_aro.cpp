#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "aro/aro.hpp"
#include "aro/rng.hpp"

using namespace aro;

namespace {

// Points on the analytic sphere: every point sits at the radius up to rounding.
PointCloud sphere_cloud(std::size_t n, double radius, std::uint64_t seed) {
  Rng rng(seed);
  PointCloud cloud;
  for (std::size_t i = 0; i < n; ++i) cloud.points.push_back(rng.unit_vector() * radius);
  return cloud;
}

AnchorSet shell_anchors(std::size_t m, double radius) {
  std::vector<Vec3> pts;
  for (const auto& d : fibonacci_sphere_directions(m)) pts.push_back(d * radius);
  return AnchorSet::custom(pts);
}

// Brute-force per-anchor selection, same two-tier rule.
std::vector<Vec3> brute_observed(const std::vector<Vec3>& pts, Vec3 a, Vec3 x, double half, std::size_t k) {
  const Vec3 axis = x - a;
  std::vector<std::tuple<bool, double, double, std::size_t>> rank;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double ang = axis == Vec3{} ? 0.0 : angle_between(axis, pts[i] - a);
    const bool in = ang <= half;
    const double d = distance(pts[i], a);
    rank.emplace_back(!in, in ? d : ang, in ? 0.0 : d, i);
  }
  std::sort(rank.begin(), rank.end());
  std::vector<Vec3> out;
  for (std::size_t j = 0; j < std::min(k, rank.size()); ++j) out.push_back(pts[std::get<3>(rank[j])] - a);
  return out;
}

}  // namespace

TEST(ExtractAro, SingleAnchorOnAxisCloud) {
  const PointCloud cloud{{{0.1, 0, 0}, {0.2, 0, 0}, {0.4, 0, 0}, {0, 0.3, 0}}, std::nullopt};
  const SpatialIndex index(cloud);
  const auto f = extract_aro(index, AnchorSet::custom({{0, 0, 0}}), {0.3, 0, 0}, degrees_to_radians(24), 3);
  ASSERT_EQ(f.observations.size(), 1u);
  const auto& o = f.observations[0];
  EXPECT_EQ(o.r, (Vec3{0.3, 0, 0}));
  EXPECT_DOUBLE_EQ(o.r_norm, 0.3);
  ASSERT_EQ(o.observed.size(), 3u);
  EXPECT_EQ(o.observed[0], (Vec3{0.1, 0, 0}));
  EXPECT_EQ(o.observed[1], (Vec3{0.2, 0, 0}));
  EXPECT_EQ(o.observed[2], (Vec3{0.4, 0, 0}));
  EXPECT_EQ(o.in_cone_count(), 3u);
}

TEST(ExtractAro, PaddingAndFallbackStatus) {
  const PointCloud cloud{{{1, 0, 0}, {0, 1, 0}}, std::nullopt};
  const SpatialIndex index(cloud);
  const auto f = extract_aro(index, AnchorSet::custom({{0, 0, 0}}), {0.5, 0, 0}, degrees_to_radians(24), 4);
  const auto& o = f.observations[0];
  ASSERT_EQ(o.observed.size(), 4u);
  EXPECT_EQ(o.status[0], ObservationStatus::InCone);
  EXPECT_EQ(o.status[1], ObservationStatus::Fallback);
  EXPECT_EQ(o.status[2], ObservationStatus::Padding);
  EXPECT_EQ(o.observed[3], (Vec3{}));
}

TEST(ExtractAro, QueryAtAnchorUsesPlainNearest) {
  const PointCloud cloud{{{0.3, 0, 0}, {0, -0.1, 0}, {0, 0, 0.2}}, std::nullopt};
  const SpatialIndex index(cloud);
  const auto f = extract_aro(index, AnchorSet::custom({{0, 0, 0}}), {0, 0, 0}, degrees_to_radians(24), 2);
  const auto& o = f.observations[0];
  EXPECT_TRUE(o.degenerate_axis);
  EXPECT_EQ(o.r_norm, 0.0);
  EXPECT_EQ(o.observed[0], (Vec3{0, -0.1, 0}));
  EXPECT_EQ(o.observed[1], (Vec3{0, 0, 0.2}));
  EXPECT_FALSE(estimate_radial_depth(o));
}

TEST(ExtractAro, RejectsBadInput) {
  const SpatialIndex index(PointCloud{{{0.3, 0, 0}}, std::nullopt});
  EXPECT_THROW(extract_aro(index, AnchorSet{}, {0, 0, 0}), Error);
  EXPECT_THROW(extract_aro(index, AnchorSet::custom({{0, 0, 0}}), {std::nan(""), 0, 0}), Error);
}

TEST(ExtractAro, MatchesBruteForceAndInvariants) {
  Rng rng(31);
  std::vector<Vec3> pts;
  for (int i = 0; i < 700; ++i) pts.push_back(rng.in_ball(0.5));
  const SpatialIndex index(PointCloud{pts, std::nullopt});
  const auto anchors = layered_fibonacci(12);
  for (int q = 0; q < 60; ++q) {
    const Vec3 x = rng.in_ball(0.5);
    const auto f = extract_aro(index, anchors, x);
    ASSERT_EQ(f.observations.size(), anchors.size());
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      const auto& o = f.observations[i];
      EXPECT_EQ(o.anchor_id, i);
      EXPECT_NEAR(o.r_norm, length(o.r), 1e-12);
      EXPECT_EQ(o.observed.size(), kDefaultK);
      EXPECT_EQ(o.observed, brute_observed(pts, anchors.positions[i], x, degrees_to_radians(24), kDefaultK));
    }
  }
}

TEST(ExtractAro, CloudOrderDoesNotMatter) {
  Rng rng(32);
  std::vector<Vec3> pts;
  for (int i = 0; i < 400; ++i) pts.push_back(rng.in_ball(0.5));
  auto shuffled = pts;
  for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
  const SpatialIndex a(PointCloud{pts, std::nullopt}), b(PointCloud{shuffled, std::nullopt});
  const auto anchors = layered_fibonacci(9);
  for (int q = 0; q < 40; ++q) {
    const Vec3 x = rng.in_ball(0.5);
    const auto fa = extract_aro(a, anchors, x), fb = extract_aro(b, anchors, x);
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      EXPECT_EQ(fa.observations[i].observed, fb.observations[i].observed);
      EXPECT_EQ(fa.observations[i].status, fb.observations[i].status);
    }
  }
}

TEST(ExtractAro, TranslationEquivariant) {
  Rng rng(33);
  const Vec3 shift{0.37, -1.2, 2.5};
  std::vector<Vec3> pts, moved;
  for (int i = 0; i < 400; ++i) {
    pts.push_back(rng.in_ball(0.5));
    moved.push_back(pts.back() + shift);
  }
  const auto anchors = layered_fibonacci(6);
  std::vector<Vec3> moved_anchors;
  for (const auto& p : anchors.positions) moved_anchors.push_back(p + shift);
  const SpatialIndex a(PointCloud{pts, std::nullopt}), b(PointCloud{moved, std::nullopt});
  for (int q = 0; q < 40; ++q) {
    const Vec3 x = rng.in_ball(0.5);
    const auto fa = extract_aro(a, anchors, x), fb = extract_aro(b, AnchorSet::custom(moved_anchors), x + shift);
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      const auto &oa = fa.observations[i], &ob = fb.observations[i];
      EXPECT_NEAR(distance(oa.r, ob.r), 0, 1e-9);
      EXPECT_NEAR(oa.r_norm, ob.r_norm, 1e-9);
      for (std::size_t j = 0; j < oa.observed.size(); ++j) EXPECT_NEAR(distance(oa.observed[j], ob.observed[j]), 0, 1e-9);
    }
  }
}

TEST(RadialDepthEstimate, Examples) {
  RadialObservation on_axis;
  on_axis.observed = {{1, 0, 0}};
  on_axis.status = {ObservationStatus::InCone};
  on_axis.r = {2, 0, 0};
  on_axis.r_norm = 2;
  ASSERT_TRUE(estimate_radial_depth(on_axis));
  EXPECT_DOUBLE_EQ(*estimate_radial_depth(on_axis), 1.0);

  RadialObservation empty = on_axis;
  empty.status = {ObservationStatus::Fallback};
  EXPECT_FALSE(estimate_radial_depth(empty));
}

TEST(RadialDepthEstimate, DenseSphereFromCentre) {
  const auto cloud = sphere_cloud(10000, 0.4, 34);
  const SpatialIndex index(cloud);
  Rng rng(35);
  for (int i = 0; i < 200; ++i) {
    const Vec3 x = rng.in_ball(0.7);
    if (length(x) == 0) continue;
    const auto o = observe_from_anchor(index, 0, {0, 0, 0}, x, degrees_to_radians(24), 16);
    const auto d = estimate_radial_depth(o);
    ASSERT_TRUE(d);
    EXPECT_NEAR(*d, 0.4, 0.02);
  }
}

TEST(HeuristicExterior, DenseSphereExamples) {
  const auto cloud = sphere_cloud(10000, 0.4, 36);
  const SpatialIndex index(cloud);
  const auto anchors = shell_anchors(48, 0.6);
  EXPECT_TRUE(heuristic_occupancy_exterior(index, anchors, {0, 0, 0}));
  EXPECT_FALSE(heuristic_occupancy_exterior(index, anchors, {0.55, 0, 0}));
}

TEST(HeuristicExterior, AllAbstainIsAnError) {
  const SpatialIndex index(PointCloud{{{0, 0, 0}}, std::nullopt});
  // Looking away from the only point: no in-cone observations.
  try {
    heuristic_occupancy_exterior(index, AnchorSet::custom({{1, 0, 0}}), {2, 0, 0});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("no observations"), std::string::npos);
  }
}

TEST(HeuristicExterior, MonotoneInDepths) {
  // A point is inside iff every voting anchor has r > d. Shrinking a depth can only turn
  // outside into inside; growing one can only turn inside into outside.
  const auto cloud = sphere_cloud(3000, 0.4, 37);
  const SpatialIndex index(cloud);
  const auto anchors = shell_anchors(24, 0.6);
  Rng rng(38);
  int checked = 0;
  for (int q = 0; q < 300; ++q) {
    const auto base = extract_aro(index, anchors, rng.in_ball(0.6));
    bool before;
    try {
      before = occupancy_from_depths(base);
    } catch (const Error&) {
      continue;
    }
    const std::size_t i = rng.below(base.observations.size());
    if (!estimate_radial_depth(base.observations[i])) continue;
    for (double scale : {0.5, 1.5}) {
      auto f = base;
      for (auto& p : f.observations[i].observed) p = p * scale;  // scales the depth, keeps every angle
      EXPECT_NEAR(*estimate_radial_depth(f.observations[i]), scale * *estimate_radial_depth(base.observations[i]), 1e-12);
      const bool after = occupancy_from_depths(f);
      if (scale < 1 && before) {
        EXPECT_TRUE(after);
      }
      if (scale > 1 && !before) {
        EXPECT_FALSE(after);
      }
    }
    ++checked;
  }
  EXPECT_GT(checked, 100);
}

TEST(AroFile, RoundTripAndLayout) {
  Rng rng(39);
  std::vector<Vec3> pts, queries;
  for (int i = 0; i < 100; ++i) pts.push_back(rng.in_ball(0.5));
  for (int i = 0; i < 5; ++i) queries.push_back(rng.in_ball(0.5));
  queries.push_back(layered_fibonacci(3).positions[1]);  // degenerate axis
  const SpatialIndex index(PointCloud{pts, std::nullopt});
  const auto anchors = layered_fibonacci(3);
  std::stringstream ss;
  encode_queries(ss, index, anchors, queries, degrees_to_radians(24), 4);
  const std::string bytes = ss.str();
  const std::size_t per_query = 24 + 3 * (33 + 4 * 25);
  EXPECT_EQ(bytes.size(), 24 + queries.size() * per_query);
  EXPECT_EQ(bytes.substr(0, 4), "AROB");

  const auto file = read_aro_file(ss);
  EXPECT_EQ(file.m, 3u);
  EXPECT_EQ(file.k, 4u);
  ASSERT_EQ(file.records.size(), queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto want = extract_aro(index, anchors, queries[q], degrees_to_radians(24), 4);
    EXPECT_EQ(file.records[q].query, queries[q]);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_EQ(file.records[q].observations[i].observed, want.observations[i].observed);
      EXPECT_EQ(file.records[q].observations[i].status, want.observations[i].status);
      EXPECT_EQ(file.records[q].observations[i].degenerate_axis, want.observations[i].degenerate_axis);
    }
  }
  EXPECT_TRUE(file.records.back().observations[1].degenerate_axis);

  std::stringstream bad("AROX");
  EXPECT_THROW(read_aro_file(bad), Error);
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_aro_file(truncated), Error);
}
