#include <gtest/gtest.h>

#include <algorithm>

#include "mmf/checks.hpp"
#include "mmf/post.hpp"
#include "support.hpp"

namespace mmf {
namespace {

TEST(PolygonArea, UnitSquare) {
  const std::vector<Vec2> sq{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  EXPECT_EQ(polygon_area(sq), 1.0);
  const std::vector<Vec2> cw{{0, 0}, {0, 1}, {1, 1}, {1, 0}};
  EXPECT_EQ(polygon_area(cw), -1.0);
}

TEST(ClipConvex, OverlappingSquares) {
  const std::vector<Vec2> a{{0, 0}, {2, 0}, {2, 2}, {0, 2}};
  const std::vector<Vec2> b{{1, 1}, {3, 1}, {3, 3}, {1, 3}};
  EXPECT_NEAR(polygon_area(clip_convex(a, b)), 1.0, 1e-15);
}

TEST(RotatedIou, IdenticalBoxes) {
  const OrientedBoxBEV b{3, 4, 1.8, 4.2, 0.7};
  EXPECT_NEAR(rotated_iou_bev(b, b), 1.0, 1e-12);
}

TEST(RotatedIou, DisjointBoxes) {
  EXPECT_EQ(rotated_iou_bev({0, 0, 2, 4, 0.1}, {100, 0, 2, 4, 0.3}), 0.0);
}

TEST(RotatedIou, FortyFiveDegreeSquares) {
  const double iou = rotated_iou_bev({0, 0, 1, 1, 0}, {0, 0, 1, 1, kPi / 4});
  const double inter = 2 * (std::sqrt(2.0) - 1);
  EXPECT_NEAR(iou, inter / (2 - inter), 1e-12);
  EXPECT_NEAR(iou, 0.7071, 3e-3);
}

TEST(RotatedIou, MatchesMonteCarlo) {
  const auto r = checks::check_rotated_iou(20, 1000000, 3);
  EXPECT_TRUE(r.passed) << checks::format_result(r);
}

TEST(RotatedIou, DegenerateIsZero) {
  EXPECT_EQ(rotated_iou_bev({0, 0, 0, 4, 0}, {0, 0, 0, 4, 0}), 0.0);
}

TEST(RotatedIou, SymmetricBoundedAndRigidInvariant) {
  Rng rng(227);
  for (int i = 0; i < 2000; ++i) {
    const auto a = checks::random_bev_box(rng, 2.0), b = checks::random_bev_box(rng, 2.0);
    const double iou = rotated_iou_bev(a, b);
    EXPECT_GE(iou, 0.0);
    EXPECT_LE(iou, 1.0);
    EXPECT_NEAR(iou, rotated_iou_bev(b, a), 1e-12);
    const double t = rng.uniform(-kPi, kPi), tx = rng.uniform(-50, 50), ty = rng.uniform(-50, 50);
    auto move = [&](OrientedBoxBEV o) {
      const double x = std::cos(t) * o.x - std::sin(t) * o.y + tx, y = std::sin(t) * o.x + std::cos(t) * o.y + ty;
      return OrientedBoxBEV{x, y, o.w, o.l, o.yaw + t};
    };
    EXPECT_NEAR(rotated_iou_bev(move(a), move(b)), iou, 1e-9);
    // Same footprint under a half turn.
    auto flipped = a;
    flipped.yaw += kPi;
    EXPECT_NEAR(rotated_iou_bev(a, flipped), 1.0, 1e-9);
  }
}

TEST(Iou3D, IdenticalBoxes) {
  const Box3D b{1, 2, 3, 1.8, 4.2, 1.5, -0.4};
  EXPECT_NEAR(iou_3d(b, b), 1.0, 1e-12);
}

TEST(Iou3D, NoVerticalOverlap) {
  const Box3D a{1, 2, 0, 1.8, 4.2, 1.5, -0.4};
  Box3D b = a;
  b.z += 1.5;
  EXPECT_EQ(iou_3d(a, b), 0.0);
  b.z += 3.0;
  EXPECT_EQ(iou_3d(a, b), 0.0);
}

TEST(Iou3D, HalfHeightOverlap) {
  const Box3D a{0, 0, 0, 2, 2, 2, 0};
  Box3D b = a;
  b.z = 1.0;
  EXPECT_NEAR(iou_3d(a, b), 4.0 / 12.0, 1e-12);
}

TEST(Iou3D, MatchesMonteCarlo) {
  const auto r = checks::check_iou_3d(10, 1000000, 5);
  EXPECT_TRUE(r.passed) << checks::format_result(r);
}

TEST(Iou2D, ClosedForms) {
  const Box2D a{0.5, 0.5, 1, 1};
  EXPECT_EQ(iou_2d(a, a), 1.0);
  EXPECT_EQ(iou_2d(a, {1.5, 0.5, 1, 1}), 0.0);
  EXPECT_NEAR(iou_2d(a, {1.0, 0.5, 1, 1}), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(iou_2d({0, 0, 0, 1}, {0, 0, 0, 1}), 0.0);
}

TEST(IouMatrix, ParallelMatchesSerial) {
  Rng rng(229);
  std::vector<OrientedBoxBEV> a(70), b(90);
  for (auto& x : a) x = checks::random_bev_box(rng, 5.0);
  for (auto& x : b) x = checks::random_bev_box(rng, 5.0);
  const auto m = iou_matrix_bev(a, b);
  EXPECT_EQ(m, iou_matrix_bev_serial(a, b));
  EXPECT_EQ(m[3 * 90 + 7], rotated_iou_bev(a[3], b[7]));
}

Detection det(double x, double y, double score, int cls = 0) { return {{x, y, 0, 1.8, 4.2, 1.5, 0.0}, score, cls}; }

TEST(Nms, DisjointBoxesAllKeptSorted) {
  const std::vector<Detection> d{det(0, 0, 0.3), det(10, 0, 0.9), det(20, 0, 0.1), det(30, 0, 0.6)};
  const auto out = oriented_nms(d, {0.2, 0.5});
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].score, 0.9);
  EXPECT_EQ(out[1].score, 0.6);
  EXPECT_EQ(out[2].score, 0.3);
}

TEST(Nms, DuplicateSuppressed) {
  const std::vector<Detection> d{det(0, 0, 0.8), det(0, 0, 0.9)};
  const auto out = oriented_nms(d, {0.0, 0.5});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].score, 0.9);
}

TEST(Nms, EqualScoresKeepInputOrder) {
  const std::vector<Detection> d{det(0, 0, 0.5), det(0.1, 0, 0.5), det(50, 0, 0.5)};
  const auto out = oriented_nms(d, {0.0, 0.5});
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].box.x, 0.0);
  EXPECT_EQ(out[1].box.x, 50.0);
}

TEST(Nms, SuppressesPerClass) {
  const std::vector<Detection> d{det(0, 0, 0.9, 0), det(0, 0, 0.8, 1)};
  EXPECT_EQ(oriented_nms(d, {0.0, 0.5}).size(), 2u);
}

TEST(Nms, MatchesReferenceAndIsIdempotent) {
  const auto a = checks::check_nms_reference(20, 200, 7);
  EXPECT_TRUE(a.passed) << checks::format_result(a);
  const auto b = checks::check_nms_idempotent(20, 200, 8);
  EXPECT_TRUE(b.passed) << checks::format_result(b);
}

TEST(Nms, OutputProperties) {
  Rng rng(233);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Detection> d(120);
    for (auto& x : d) x = {checks::random_box3d(rng, 10.0), rng.uniform(), 0};
    std::size_t prev_kept = d.size() + 1;
    for (double thr : {0.9, 0.7, 0.5, 0.3, 0.1}) {
      const auto out = oriented_nms(d, {0.2, thr});
      for (std::size_t i = 0; i < out.size(); ++i) {
        EXPECT_GE(out[i].score, 0.2);
        if (i) {
          EXPECT_LE(out[i].score, out[i - 1].score);
        }
        for (std::size_t j = i + 1; j < out.size(); ++j) {
          EXPECT_LT(rotated_iou_bev(box3d_to_bev(out[i].box), box3d_to_bev(out[j].box)), thr);
        }
      }
      EXPECT_LE(out.size(), prev_kept);
      prev_kept = out.size();
    }
  }
}

}  // namespace
}  // namespace mmf
