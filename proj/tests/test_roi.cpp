#include <gtest/gtest.h>

#include "mmf/checks.hpp"
#include "mmf/errors.hpp"
#include "mmf/roi.hpp"
#include "support.hpp"

namespace mmf {
namespace {

TEST(OrientationAnchor, Zero) {
  const auto a = assign_orientation_anchor(0.0);
  EXPECT_EQ(a.anchor, OrientationAnchor::kA0);
  EXPECT_EQ(a.residual, 0.0);
}

TEST(OrientationAnchor, RightAngle) {
  const auto a = assign_orientation_anchor(kPi / 2);
  EXPECT_EQ(a.anchor, OrientationAnchor::kA90);
  EXPECT_NEAR(a.residual, 0.0, 1e-15);
}

TEST(OrientationAnchor, PastBandEdge) {
  const auto a = assign_orientation_anchor(0.80);
  EXPECT_EQ(a.anchor, OrientationAnchor::kA90);
  EXPECT_NEAR(a.residual, 0.80 - kPi / 2, 1e-12);
  EXPECT_NEAR(a.residual, -0.7708, 1e-4);
}

TEST(OrientationAnchor, HalfOpenBands) {
  EXPECT_EQ(assign_orientation_anchor(-kPi / 4).anchor, OrientationAnchor::kA0);
  EXPECT_EQ(assign_orientation_anchor(kPi / 4).anchor, OrientationAnchor::kA90);
  EXPECT_EQ(assign_orientation_anchor(3 * kPi / 4).anchor, OrientationAnchor::kA0);
}

TEST(OrientationAnchor, FineSweep) {
  const int n = 200000;
  double prev_residual = 0.0;
  OrientationAnchor prev_anchor{};
  for (int i = 0; i <= n; ++i) {
    const double t = -3 * kPi + 6 * kPi * i / n;
    const auto a = assign_orientation_anchor(t);
    EXPECT_GE(a.residual, -kPi / 4 - 1e-12);
    EXPECT_LT(std::abs(a.residual), kPi / 4 + 1e-12);
    // Canonical angle is congruent to the input modulo pi.
    EXPECT_NEAR(std::sin(2 * (a.canonical() - t)), 0.0, 1e-9);
    EXPECT_NEAR(std::cos(2 * (a.canonical() - t)), 1.0, 1e-9);
    // Idempotent and pi-periodic.
    const auto again = assign_orientation_anchor(a.canonical());
    EXPECT_EQ(again.anchor, a.anchor);
    EXPECT_NEAR(again.residual, a.residual, 1e-12);
    const auto shifted = assign_orientation_anchor(t + kPi);
    if (std::abs(std::abs(a.residual) - kPi / 4) > 1e-9) {
      EXPECT_EQ(shifted.anchor, a.anchor);
      EXPECT_NEAR(shifted.residual, a.residual, 1e-9);
    }
    // Continuity inside a band.
    if (i > 0 && a.anchor == prev_anchor) {
      EXPECT_LT(std::abs(a.residual - prev_residual), 1e-3);
    }
    prev_residual = a.residual;
    prev_anchor = a.anchor;
  }
}

struct DoubleMap {
  Tensor3<double> t;
  double stride = 0.5;
  double ox = 0.0, oy = 0.0;
  GridView<double> view() const { return t.view(); }
};

DoubleMap ramp_map(int rows, int cols, double a, double b, double c) {
  DoubleMap m{Tensor3<double>(1, rows, cols)};
  for (int r = 0; r < rows; ++r) {
    for (int col = 0; col < cols; ++col) {
      const double x = m.ox + (col + 0.5) * m.stride, y = m.oy + (r + 0.5) * m.stride;
      m.t.at(0, r, col) = a * x + b * y + c;
    }
  }
  return m;
}

TEST(OrientedRoi, ConstantMap) {
  FeatureMap m;
  m.stride = 0.5;
  m.values = Tensor3<float>(3, 40, 40, 2.5f);
  Rng rng(149);
  for (int i = 0; i < 50; ++i) {
    const OrientedROI roi{{rng.uniform(2, 18), rng.uniform(2, 18), rng.uniform(0.5, 3), rng.uniform(1, 6), rng.uniform(-kPi, kPi)}, 5};
    const auto f = extract_oriented_roi(m, roi);
    EXPECT_EQ(f.values.channels, 3);
    EXPECT_EQ(f.values.rows, 5);
    for (double v : f.values.data) EXPECT_NEAR(v, 2.5, 1e-12);
  }
}

TEST(OrientedRoi, AffineRampIsReproduced) {
  const auto m = ramp_map(60, 60, 1.0, 0.0, 0.0);
  Rng rng(151);
  for (int i = 0; i < 100; ++i) {
    const OrientedROI roi{{rng.uniform(8, 22), rng.uniform(8, 22), rng.uniform(0.5, 3), rng.uniform(1, 6), rng.uniform(-kPi, kPi)}, 5};
    const auto f = extract_oriented_roi(m.view(), m.stride, m.ox, m.oy, roi);
    const auto pts = oriented_roi_lattice(roi);
    ASSERT_EQ(pts.size(), 25u);
    for (int k = 0; k < 25; ++k) EXPECT_NEAR(f.values.data[k], pts[k].x, 1e-9);
  }
}

TEST(OrientedRoi, LatticeCoversBoxInOrder) {
  const OrientedROI roi{{10, 5, 2, 4, 0.0}, 4};
  const auto pts = oriented_roi_lattice(roi);
  // b runs along the length (x here), a across it (y).
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) {
      EXPECT_NEAR(pts[a * 4 + b].x, 10 - 2 + (b + 0.5), 1e-12);
      EXPECT_NEAR(pts[a * 4 + b].y, 5 - 1 + (a + 0.5) * 0.5, 1e-12);
    }
  }
}

TEST(OrientedRoi, LatticeContinuousInsideBand) {
  for (double base : {0.0, kPi / 2}) {
    std::vector<Vec2> prev;
    for (int i = 0; i <= 1000; ++i) {
      const double t = base - kPi / 4 + 1e-6 + (kPi / 2 - 2e-6) * i / 1000;
      const auto pts = oriented_roi_lattice({{10, 10, 2, 4, t}, 5});
      if (!prev.empty()) {
        for (std::size_t k = 0; k < pts.size(); ++k) {
          EXPECT_LT(std::hypot(pts[k].x - prev[k].x, pts[k].y - prev[k].y), 0.01);
        }
      }
      prev = pts;
    }
  }
}

TEST(OrientedRoi, PiPeriodicExtractionOrder) {
  const auto a = oriented_roi_lattice({{10, 10, 2, 4, 0.3}, 5});
  const auto b = oriented_roi_lattice({{10, 10, 2, 4, 0.3 + kPi}, 5});
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_NEAR(a[k].x, b[k].x, 1e-9);
    EXPECT_NEAR(a[k].y, b[k].y, 1e-9);
  }
}

TEST(OrientedRoi, GradientCheck) {
  const auto r = checks::check_roi_gradients(10, 7);
  EXPECT_TRUE(r.passed) << checks::format_result(r);
}

TEST(OrientedRoi, BackwardIsAdjointOfForward) {
  Rng rng(157);
  FeatureMap m;
  m.stride = 0.5;
  m.values = Tensor3<float>(2, 30, 30);
  for (auto& v : m.values.data) v = static_cast<float>(rng.uniform(-1, 1));
  const OrientedROI roi{{7, 8, 1.5, 3.5, 0.7}, 5};
  const auto f = extract_oriented_roi(m, roi);
  Tensor3<double> up(2, 5, 5);
  for (auto& v : up.data) v = rng.uniform(-1, 1);
  const auto g = f.backward(up);
  // <up, forward(m)> = <backward(up), m> because extraction is linear in the map.
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < up.data.size(); ++i) lhs += up.data[i] * f.values.data[i];
  for (std::size_t i = 0; i < g.data.size(); ++i) rhs += g.data[i] * m.values.data[i];
  EXPECT_NEAR(lhs, rhs, 1e-9);
}

TEST(OrientedRoi, RejectsDegenerateInput) {
  FeatureMap m;
  m.stride = 0.5;
  m.values = Tensor3<float>(1, 20, 20);
  EXPECT_THROW(extract_oriented_roi(m, {{5, 5, 0, 2, 0}, 5}), InvalidInput);
  EXPECT_THROW(extract_oriented_roi(m, {{5, 5, 1, -2, 0}, 5}), InvalidInput);
  EXPECT_THROW(extract_oriented_roi(m, {{5, 5, 1, 2, 0}, 0}), InvalidInput);
  EXPECT_THROW(extract_oriented_roi(m, {{50, 5, 1, 2, 0}, 5}), InvalidInput);
}

TEST(AxisAlignedRoi, ConstantMap) {
  FeatureMap m;
  m.stride = 4;
  m.values = Tensor3<float>(2, 20, 30, -1.5f);
  const auto f = extract_axis_aligned_roi(m, Box2D{40, 30, 25, 13}, 5);
  for (double v : f.values.data) EXPECT_NEAR(v, -1.5, 1e-12);
}

TEST(AxisAlignedRoi, OneCellRect) {
  Rng rng(163);
  FeatureMap m;
  m.stride = 4;
  m.values = Tensor3<float>(1, 10, 10);
  for (auto& v : m.values.data) v = static_cast<float>(rng.uniform(-1, 1));
  // Cell (3, 5) spans pixels [20, 24) x [12, 16).
  const Box2D rect = Box2D::from_ltrb(20, 12, 24, 16);
  const auto f = extract_axis_aligned_roi(m, rect, 3);
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      const double px = 20 + (b + 0.5) * 4 / 3, py = 12 + (a + 0.5) * 4 / 3;
      const double expect = bilinear_sample(m.values.view(), 0, m.pixel_to_cell(py), m.pixel_to_cell(px));
      EXPECT_NEAR(f.values.at(0, a, b), expect, 1e-12);
    }
  }
}

TEST(AxisAlignedRoi, MatchesOrientedAtZeroYaw) {
  Rng rng(167);
  Tensor3<double> t(3, 40, 50);
  for (auto& v : t.data) v = rng.uniform(-1, 1);
  const double s = 4.0;
  for (int i = 0; i < 200; ++i) {
    const Box2D rect{rng.uniform(20, 180), rng.uniform(20, 140), rng.uniform(2, 60), rng.uniform(2, 60)};
    const int n = static_cast<int>(rng.integer(1, 7));
    const auto a = extract_axis_aligned_roi(t.view(), s, rect, n);
    // Pixel p maps to cell (p + 0.5) / s - 0.5, which is the BEV rule with origin -0.5.
    const OrientedROI roi{{rect.x, rect.y, rect.h, rect.w, 0.0}, n};
    const auto o = extract_oriented_roi(t.view(), s, -0.5, -0.5, roi);
    ASSERT_EQ(a.values.data.size(), o.values.data.size());
    for (std::size_t k = 0; k < a.values.data.size(); ++k) EXPECT_NEAR(a.values.data[k], o.values.data[k], 1e-9);
  }
}

TEST(AxisAlignedRoi, RejectsDegenerateRect) {
  FeatureMap m;
  m.stride = 4;
  m.values = Tensor3<float>(1, 10, 10);
  EXPECT_THROW(extract_axis_aligned_roi(m, Box2D{10, 10, 0, 5}, 5), InvalidInput);
  EXPECT_THROW(extract_axis_aligned_roi(m, Box2D{10, 10, 5, -1}, 5), InvalidInput);
}

TEST(RefinementOffsets, IdentityIsZero) {
  const Box3D b{3, 4, -1, 1.8, 4.2, 1.5, 0.9};
  for (double v : encode_refinement_offsets(b, b)) EXPECT_EQ(v, 0.0);
}

TEST(RefinementOffsets, RightAngleRotation) {
  const Box3D det{0, 0, 0, 1, 1, 1, kPi / 2};
  Box3D tgt = det;
  tgt.x = 1.0;
  const auto o = encode_refinement_offsets(det, tgt);
  EXPECT_NEAR(o[0], 0.0, 1e-12);
  EXPECT_NEAR(o[1], -1.0, 1e-12);
}

TEST(RefinementOffsets, RoundTrip) {
  Rng rng(173);
  for (int i = 0; i < 1000; ++i) {
    const Box3D d = test::random_box(rng, 30), t = test::random_box(rng, 30);
    const auto o = encode_refinement_offsets(d, t);
    EXPECT_GE(o[6], -kPi / 2);
    EXPECT_LT(o[6], kPi / 2);
    const Box3D r = decode_refinement_offsets(d, o);
    EXPECT_NEAR(r.x, t.x, 1e-9);
    EXPECT_NEAR(r.y, t.y, 1e-9);
    EXPECT_NEAR(r.z, t.z, 1e-9);
    EXPECT_NEAR(r.w, t.w, 1e-9);
    EXPECT_NEAR(r.l, t.l, 1e-9);
    EXPECT_NEAR(r.h, t.h, 1e-9);
    EXPECT_NEAR(wrap_angle_half(r.yaw - t.yaw), 0.0, 1e-9);
  }
}

}  // namespace
}  // namespace mmf
