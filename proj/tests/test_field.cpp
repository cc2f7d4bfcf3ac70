#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "aro/bvh.hpp"
#include "aro/field.hpp"
#include "aro/rng.hpp"

using namespace aro;

namespace {

double ball_indicator(Vec3 p) { return length(p) < 0.4 ? 1.0 : 0.0; }

// Sampled two-sided Hausdorff distance between a mesh and the analytic sphere of radius r.
double hausdorff_to_sphere(const TriMesh& mesh, double r, std::uint64_t seed) {
  double worst = 0;
  for (const auto& v : mesh.vertices) worst = std::max(worst, std::abs(length(v) - r));
  const MeshBvh bvh(mesh);
  Rng rng(seed);
  for (int i = 0; i < 2000; ++i) worst = std::max(worst, bvh.distance_to_surface(rng.unit_vector() * r));
  return worst;
}

Grid2D sample_2d(int n, const std::function<double(Vec2)>& f) {
  const double h = 1.0 / (n - 1);
  Grid2D g(n, n, {-0.5, -0.5}, {h, h});
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) g.at(i, j) = f(g.point(i, j));
  return g;
}

double signed_area(const Polyline& line) {
  double a = 0;
  for (std::size_t i = 0; i < line.points.size(); ++i) {
    const Vec2 p = line.points[i], q = line.points[(i + 1) % line.points.size()];
    a += p.x * q.y - q.x * p.y;
  }
  return a / 2;
}

}  // namespace

TEST(EvaluateGrid, ConstantFunction) {
  const auto g = evaluate_grid([](Vec3) { return 1.0; }, Aabb::cube(0.5), {4, 5, 6});
  EXPECT_EQ(g.size(), 120u);
  for (double v : g.values) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(g.point(0, 0, 0), (Vec3{-0.5, -0.5, -0.5}));
  EXPECT_NEAR(distance(g.point(3, 4, 5), Vec3{0.5, 0.5, 0.5}), 0, 1e-15);
}

TEST(EvaluateGrid, BallIndicatorAtCorners) {
  const auto g = evaluate_grid(ball_indicator, Aabb::cube(0.5), {32, 32, 32});
  for (int k = 0; k < 32; ++k)
    for (int j = 0; j < 32; ++j)
      for (int i = 0; i < 32; ++i) EXPECT_EQ(g.at(i, j, k), length(g.point(i, j, k)) < 0.4 ? 1.0 : 0.0);
}

TEST(EvaluateGrid, ParallelMatchesSequential) {
  auto f = [](Vec3 p) { return 0.5 + 0.5 * std::sin(7 * p.x) * std::cos(5 * p.y + p.z); };
  const auto a = evaluate_grid(f, Aabb::cube(0.5), {33, 17, 9}, true);
  const auto b = evaluate_grid(f, Aabb::cube(0.5), {33, 17, 9}, false);
  EXPECT_EQ(a.values, b.values);
}

TEST(EvaluateGrid, Errors) {
  EXPECT_THROW(evaluate_grid([](Vec3) { return 0.0; }, Aabb::cube(0.5), {1, 4, 4}), Error);
  try {
    evaluate_grid([](Vec3 p) { return p.x > 0.2 ? 1.5 : 0.0; }, Aabb::cube(0.5), {8, 8, 8});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("at ("), std::string::npos);
  }
}

TEST(MarchingCubes, BallWithinTwoCells) {
  const auto g = evaluate_grid(ball_indicator, Aabb::cube(0.5), {64, 64, 64});
  const auto mesh = marching_cubes(g);
  ASSERT_FALSE(mesh.triangles.empty());
  EXPECT_TRUE(mesh.watertight);
  EXPECT_LT(hausdorff_to_sphere(mesh, 0.4, 1), 2 * g.max_spacing());
}

TEST(MarchingCubes, NoCrossingGivesEmptyMesh) {
  OccupancyGrid zeros({8, 8, 8}, {}, {0.1, 0.1, 0.1}, 0.0), ones({8, 8, 8}, {}, {0.1, 0.1, 0.1}, 1.0);
  EXPECT_TRUE(marching_cubes(zeros).triangles.empty());
  EXPECT_TRUE(marching_cubes(ones).triangles.empty());
}

TEST(MarchingCubes, TrianglesHaveArea) {
  // Values exactly at the iso level make coincident vertices; those triangles must be dropped.
  auto f = [](Vec3 p) {
    const double r = length(p);
    return r < 0.3 ? 1.0 : (r < 0.35 ? 0.5 : 0.0);
  };
  const auto mesh = marching_cubes(evaluate_grid(f, Aabb::cube(0.5), {21, 21, 21}));
  for (std::size_t t = 0; t < mesh.size(); ++t) EXPECT_GT(triangle_area(mesh.triangle(t)), 1e-12);
}

TEST(MarchingCubes, EveryCaseIsClosedInsideOneCell) {
  // Each of the 256 corner patterns, padded by an outside layer, gives a closed surface.
  for (int mask = 1; mask < 255; ++mask) {
    OccupancyGrid g({4, 4, 4}, {}, {1, 1, 1}, 0.0);
    for (int c = 0; c < 8; ++c)
      if ((mask >> c) & 1) g.values[g.index(1 + (c & 1), 1 + ((c >> 1) & 1), 1 + ((c >> 2) & 1))] = 1.0;
    const auto mesh = marching_cubes(g);
    EXPECT_TRUE(mesh.watertight) << "mask " << mask;
  }
}

TEST(MarchingCubes, OutwardOrientationEnclosesPositiveVolume) {
  const auto mesh = marching_cubes(evaluate_grid(ball_indicator, Aabb::cube(0.5), {24, 24, 24}));
  double volume = 0;
  for (std::size_t t = 0; t < mesh.size(); ++t) {
    const auto tri = mesh.triangle(t);
    volume += dot(tri[0], cross(tri[1], tri[2])) / 6;
  }
  EXPECT_NEAR(volume, 4.0 / 3.0 * std::numbers::pi * 0.064, 0.03);
}

TEST(MarchingCubes, RefinementDoesNotIncreaseError) {
  // Smooth field: the zero crossing interpolates well, so error falls with resolution.
  auto f = [](Vec3 p) { return std::clamp(0.5 + 2.0 * (0.4 - length(p)), 0.0, 1.0); };
  double previous = std::numeric_limits<double>::infinity();
  for (int n : {16, 32, 64}) {
    const double h = hausdorff_to_sphere(marching_cubes(evaluate_grid(f, Aabb::cube(0.5), {n, n, n})), 0.4, 2);
    EXPECT_LE(h, previous * 1.5) << "res " << n;
    previous = h;
  }
}

TEST(MarchingCubes, Deterministic) {
  const auto g = evaluate_grid(ball_indicator, Aabb::cube(0.5), {20, 20, 20});
  const auto a = marching_cubes(g), b = marching_cubes(g);
  EXPECT_EQ(a.vertices, b.vertices);
  EXPECT_EQ(a.triangles, b.triangles);
}

TEST(MarchingSquares, DiskPerimeter) {
  // Indicator anti-aliased over one pixel; a hard 0/1 image puts every vertex at an edge
  // midpoint and overshoots the perimeter by about 5% at any resolution.
  const double r = 0.3, h = 1.0 / 255;
  const auto loops = marching_squares(sample_2d(256, [&](Vec2 p) { return std::clamp(0.5 + (r - length(p)) / h, 0.0, 1.0); }));
  ASSERT_EQ(loops.size(), 1u);
  EXPECT_TRUE(loops[0].closed);
  EXPECT_NEAR(loops[0].length() / (2 * std::numbers::pi * r), 1.0, 0.05);
  EXPECT_GT(signed_area(loops[0]), 0);  // counter-clockwise around the inside
}

TEST(MarchingSquares, HardDiskStillOneClosedLoop) {
  const auto loops = marching_squares(sample_2d(256, [](Vec2 p) { return length(p) < 0.3 ? 1.0 : 0.0; }));
  ASSERT_EQ(loops.size(), 1u);
  EXPECT_TRUE(loops[0].closed);
  EXPECT_NEAR(loops[0].length() / (2 * std::numbers::pi * 0.3), 1.0, 0.08);
}

TEST(MarchingSquares, EmptyAndFullGrids) {
  EXPECT_TRUE(marching_squares(sample_2d(16, [](Vec2) { return 0.0; })).empty());
  EXPECT_TRUE(marching_squares(sample_2d(16, [](Vec2) { return 1.0; })).empty());
}

TEST(MarchingSquares, AnnulusHasTwoLoops) {
  const auto loops = marching_squares(sample_2d(256, [](Vec2 p) {
    const double d = length(p);
    return d > 0.15 && d < 0.35 ? 1.0 : 0.0;
  }));
  ASSERT_EQ(loops.size(), 2u);
  double areas[2] = {signed_area(loops[0]), signed_area(loops[1])};
  for (const auto& l : loops) EXPECT_TRUE(l.closed);
  // Outer boundary counter-clockwise, hole clockwise.
  EXPECT_LT(std::min(areas[0], areas[1]), 0);
  EXPECT_GT(std::max(areas[0], areas[1]), 0);
}

TEST(MarchingSquares, ContourTouchingBorderIsOpen) {
  const auto loops = marching_squares(sample_2d(32, [](Vec2 p) { return p.x > 0.1 ? 1.0 : 0.0; }));
  ASSERT_EQ(loops.size(), 1u);
  EXPECT_FALSE(loops[0].closed);
  for (const auto& p : loops[0].points) EXPECT_NEAR(p.x, 0.1, 1.0 / 31);
}

TEST(GridFile, RoundTripAsFloat32) {
  auto g = evaluate_grid([](Vec3 p) { return 0.5 + 0.5 * std::tanh(3 * p.x - p.y); }, Aabb{{-0.5, -0.25, 0}, {0.5, 0.25, 1}},
                         {5, 4, 3});
  std::stringstream ss;
  write_grid(ss, g);
  const auto back = read_grid(ss);
  EXPECT_EQ(back.res, g.res);
  EXPECT_EQ(back.origin, g.origin);
  EXPECT_EQ(back.spacing, g.spacing);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(back.values[i], static_cast<double>(static_cast<float>(g.values[i])));

  const std::string text = ss.str();
  EXPECT_EQ(text.rfind("ARO-GRID v1\nresolution 5 4 3\n", 0), 0u);
  EXPECT_EQ(text.size() - text.find("spacing") - text.substr(text.find("spacing")).find('\n') - 1, 60u * 4);
}

TEST(GridFile, RejectsBadInput) {
  std::stringstream a("ARO-GRID v2\n");
  EXPECT_THROW(read_grid(a), Error);
  std::stringstream b("ARO-GRID v1\nresolution 2 2 2\norigin 0 0 0\nspacing 1 1 1\nabc");
  EXPECT_THROW(read_grid(b), Error);
  OccupancyGrid g({2, 2, 2}, {}, {1, 1, 1}, 2.0);
  std::stringstream c;
  write_grid(c, g);
  EXPECT_THROW(read_grid(c), Error);
}

TEST(Pgm, PlainEightBitTopRowFirst) {
  Grid2D g(3, 2, {0, 0}, {1, 1});
  g.at(0, 0) = 0.0;
  g.at(1, 0) = 0.5;
  g.at(2, 0) = 1.0;
  g.at(0, 1) = 0.2;
  g.at(1, 1) = 0.998;
  g.at(2, 1) = 0.001;
  std::stringstream ss;
  write_pgm(ss, g);
  EXPECT_EQ(ss.str(), "P2\n3 2\n255\n51 254 0\n0 128 255\n");
}
