#include <gtest/gtest.h>

#include "mmf/errors.hpp"
#include "mmf/ground.hpp"
#include "support.hpp"

namespace mmf {
namespace {

VoxelGridConfig grid20() {
  VoxelGridConfig g;
  g.x = {0.0, 10.0};
  g.y = {-5.0, 5.0};
  g.nx = 20;
  g.ny = 20;
  return g;
}

std::vector<Point3D> plane_points(Rng& rng, const VoxelGridConfig& g, int n, double (*z)(double, double)) {
  std::vector<Point3D> pts(n);
  for (auto& p : pts) {
    const double x = rng.uniform(g.x.min, g.x.max), y = rng.uniform(g.y.min, g.y.max);
    p = {x, y, z(x, y)};
  }
  return pts;
}

TEST(GroundBaseline, ConstantPlane) {
  const auto g = grid20();
  Rng rng(71);
  const auto pts = plane_points(rng, g, 4000, [](double, double) { return 1.2; });
  const auto m = estimate_ground_baseline(pts, g);
  ASSERT_EQ(m.heights.size(), 400u);
  for (std::size_t i = 0; i < m.heights.size(); ++i) {
    EXPECT_EQ(m.heights[i], 1.2f);
    EXPECT_TRUE(m.valid[i]);
  }
  EXPECT_FALSE(m.empty_input);
}

TEST(GroundBaseline, NoPoints) {
  const auto m = estimate_ground_baseline(std::vector<Point3D>{}, grid20());
  EXPECT_TRUE(m.empty_input);
  for (std::size_t i = 0; i < m.heights.size(); ++i) {
    EXPECT_EQ(m.heights[i], 0.0f);
    EXPECT_FALSE(m.valid[i]);
  }
}

TEST(GroundBaseline, TiltedPlaneWithinOneVoxel) {
  const auto g = grid20();
  Rng rng(73);
  const auto pts = plane_points(rng, g, 20000, [](double x, double) { return 0.01 * x; });
  const auto m = estimate_ground_baseline(pts, g);
  for (int iy = 0; iy < g.ny; ++iy) {
    for (int ix = 0; ix < g.nx; ++ix) {
      const auto c = g.cell_center(ix, iy);
      EXPECT_NEAR(m.at(ix, iy), 0.01 * c.x, g.edge_x());
    }
  }
}

TEST(GroundBaseline, InvalidCellsTakeNearestValid) {
  const auto g = grid20();
  // Points only in cell (ix 2, iy 2); with the 3x3 neighbourhood cells 1..3 observe them.
  std::vector<Point3D> pts{{g.cell_center(2, 2).x, g.cell_center(2, 2).y, 0.7}};
  const auto m = estimate_ground_baseline(pts, g);
  std::size_t valid = 0;
  for (auto v : m.valid) valid += v;
  EXPECT_EQ(valid, 9u);
  for (float h : m.heights) EXPECT_FLOAT_EQ(h, 0.7f);
}

TEST(GroundBaseline, PermutationInvariant) {
  const auto g = grid20();
  Rng rng(79);
  auto pts = plane_points(rng, g, 3000, [](double x, double y) { return 0.05 * x - 0.02 * y; });
  for (auto& p : pts) p.z += rng.uniform(-0.2, 0.2);
  const auto a = estimate_ground_baseline(pts, g);
  std::reverse(pts.begin(), pts.end());
  const auto b = estimate_ground_baseline(pts, g);
  EXPECT_EQ(a.heights, b.heights);
  EXPECT_EQ(a.valid, b.valid);
}

TEST(Percentile, LinearInterpolation) {
  EXPECT_DOUBLE_EQ(percentile({3, 1, 2, 4, 5}, 50), 3.0);
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4, 5}, 0), 1.0);
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4, 5}, 100), 5.0);
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4, 5}, 5), 1.2);
  EXPECT_DOUBLE_EQ(percentile({10, 0}, 25), 2.5);
}

TEST(GroundRelative, FlatSubtraction) {
  const auto g = grid20();
  const auto m = GroundHeightMap::constant(g, 1.2f);
  const auto out = make_ground_relative(std::vector<Point3D>{{1, 1, 2.0}}, m, g);
  EXPECT_NEAR(out[0].z, 0.8, 1e-6);
  EXPECT_EQ(out[0].x, 1.0);
  EXPECT_EQ(out[0].y, 1.0);
}

TEST(GroundRelative, ZeroMapIsIdentity) {
  const auto g = grid20();
  Rng rng(83);
  std::vector<Point3D> pts(500);
  for (auto& p : pts) p = {rng.uniform(-2, 12), rng.uniform(-7, 7), rng.uniform(-3, 3)};
  const auto out = make_ground_relative(pts, GroundHeightMap::zeros(g), g);
  EXPECT_EQ(out, pts);
}

TEST(GroundRelative, OutsidePointsPassThrough) {
  const auto g = grid20();
  const auto m = GroundHeightMap::constant(g, 1.0f);
  const std::vector<Point3D> pts{{-1, 0, 2}, {10, 0, 2}, {1, 5, 2}};
  EXPECT_EQ(make_ground_relative(pts, m, g), pts);
}

TEST(GroundRelative, GridMismatchIsConfigError) {
  auto other = grid20();
  other.nx = 21;
  EXPECT_THROW(make_ground_relative(std::vector<Point3D>{}, GroundHeightMap::zeros(other), grid20()), ConfigError);
  EXPECT_THROW(restore_ground_height(std::vector<Box3D>{}, GroundHeightMap::zeros(other), grid20()), ConfigError);
}

TEST(RestoreGround, FlatAddition) {
  const auto g = grid20();
  const auto r = restore_ground_height(std::vector<Box3D>{{1, 1, 0.3, 1, 2, 1.5, 0.4}}, GroundHeightMap::constant(g, 1.2f), g);
  EXPECT_NEAR(r.boxes[0].z, 1.5, 1e-6);
  EXPECT_FALSE(r.outside[0]);
  EXPECT_EQ(r.boxes[0].w, 1.0);
  EXPECT_EQ(r.boxes[0].l, 2.0);
  EXPECT_EQ(r.boxes[0].h, 1.5);
  EXPECT_EQ(r.boxes[0].yaw, 0.4);
}

TEST(RestoreGround, ZeroMapIsIdentity) {
  const auto g = grid20();
  const std::vector<Box3D> boxes{{1, 1, 0.3, 1, 2, 1.5, 0.4}, {5, -3, -1, 2, 4, 1.5, -2}};
  EXPECT_EQ(restore_ground_height(boxes, GroundHeightMap::zeros(g), g).boxes, boxes);
}

TEST(RestoreGround, OutsideCenterIsFlagged) {
  const auto g = grid20();
  const auto r = restore_ground_height(std::vector<Box3D>{{20, 0, 0.3, 1, 1, 1, 0}}, GroundHeightMap::constant(g, 2.0f), g);
  EXPECT_TRUE(r.outside[0]);
  EXPECT_EQ(r.boxes[0].z, 0.3);
}

TEST(RestoreGround, InverseOfSubtraction) {
  const auto g = grid20();
  Rng rng(89);
  auto pts = plane_points(rng, g, 5000, [](double x, double y) { return 0.03 * x + 0.01 * y - 1.0; });
  const auto m = estimate_ground_baseline(pts, g);
  std::vector<Point3D> centers(200);
  std::vector<Box3D> boxes(200);
  for (int i = 0; i < 200; ++i) {
    centers[i] = {rng.uniform(g.x.min, g.x.max), rng.uniform(g.y.min, g.y.max), rng.uniform(-2, 2)};
  }
  const auto rel = make_ground_relative(centers, m, g);
  for (int i = 0; i < 200; ++i) boxes[i] = {rel[i].x, rel[i].y, rel[i].z, 1.8, 4.2, 1.5, 0.2};
  const auto back = restore_ground_height(boxes, m, g);
  for (int i = 0; i < 200; ++i) {
    EXPECT_NEAR(back.boxes[i].z, centers[i].z, 1e-9);
    EXPECT_EQ(back.boxes[i].x, centers[i].x);
    EXPECT_EQ(back.boxes[i].y, centers[i].y);
  }
}

}  // namespace
}  // namespace mmf
