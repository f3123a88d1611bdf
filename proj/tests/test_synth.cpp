#include <gtest/gtest.h>

#include <cmath>

#include "mmf/errors.hpp"
#include "mmf/features.hpp"
#include "mmf/post.hpp"
#include "mmf/synth.hpp"
#include "support.hpp"

namespace mmf {
namespace {

double distance(const Point3D& a, const Point3D& b) {
  return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z));
}

bool inside_box(const Point3D& p, const Box3D& b, double tol) {
  const double dx = p.x - b.x, dy = p.y - b.y;
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double along = c * dx + s * dy;
  const double across = -s * dx + c * dy;
  return std::abs(along) <= 0.5 * b.l + tol && std::abs(across) <= 0.5 * b.w + tol &&
         std::abs(p.z - b.z) <= 0.5 * b.h + tol;
}

SceneSpec small_spec(std::uint64_t seed) {
  SceneSpec s;
  s.seed = seed;
  s.extent.x = {0, 40};
  s.extent.y = {-20, 20};
  s.extent.nx = 200, s.extent.ny = 200;
  s.forward = {6, 35};
  return s;
}

// ---------------------------------------------------------------------------
// synth_scene

TEST(Synth, Deterministic) {
  const auto a = synth_scene(small_spec(11));
  const auto b = synth_scene(small_spec(11));
  EXPECT_EQ(a.points, b.points);
  ASSERT_EQ(a.labels.size(), b.labels.size());
  for (std::size_t i = 0; i < a.labels.size(); ++i) EXPECT_EQ(a.labels[i].box3d, b.labels[i].box3d);
  EXPECT_EQ(a.dense_depth->depth, b.dense_depth->depth);
  const auto c = synth_scene(small_spec(12));
  EXPECT_NE(a.points, c.points);
}

TEST(Synth, EmptySceneIsGroundWithinNoise) {
  auto s = small_spec(3);
  s.min_boxes = s.max_boxes = 0;
  s.ground = {0.01, -0.02, -1.6};
  const auto f = synth_scene(s);
  EXPECT_TRUE(f.labels.empty());
  EXPECT_EQ(f.points.size(), static_cast<std::size_t>(std::llround(s.ground_density * 40 * 40)));
  for (const auto& p : f.points) {
    EXPECT_LE(std::abs(p.p.z - s.ground.height(p.p.x, p.p.y)), s.noise + 1e-6);
  }
}

TEST(Synth, BoxesAreSeparatedGroundedAndSampled) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = small_spec(seed);
    const auto f = synth_scene(s);
    ASSERT_GE(static_cast<int>(f.labels.size()), s.min_boxes);
    ASSERT_LE(static_cast<int>(f.labels.size()), s.max_boxes);
    for (std::size_t i = 0; i < f.labels.size(); ++i) {
      const auto& b = f.labels[i].box3d;
      EXPECT_NEAR(b.z - 0.5 * b.h, s.ground.height(b.x, b.y), 1e-12);
      EXPECT_GE(b.l, s.length.min);
      EXPECT_LE(b.l, s.length.max);
      int hits = 0;
      for (const auto& p : f.points) hits += inside_box(p.p, b, s.noise + 1e-6);
      EXPECT_GT(hits, 0);
      for (std::size_t j = 0; j < i; ++j) {
        EXPECT_EQ(bev_intersection_area(box3d_to_bev(b), box3d_to_bev(f.labels[j].box3d)), 0.0);
      }
    }
  }
}

TEST(Synth, BoxesAreNearerThanGroundInDepth) {
  const auto s = small_spec(21);
  const auto f = synth_scene(s);
  ASSERT_TRUE(f.dense_depth);
  for (const auto& o : f.labels) {
    const auto& r = o.box2d;
    const double u = r.x + 0.5 * r.w, v = r.y + 0.5 * r.h;
    const auto box_depth = ray_box_depth(o.box3d, u, v, f.calib);
    if (!box_depth) continue;
    const int row = static_cast<int>(std::lround(v)), col = static_cast<int>(std::lround(u));
    const float d = f.dense_depth->at(row, col);
    ASSERT_GT(d, 0.0f);
    EXPECT_LE(d, *box_depth + 1e-3);
    const auto ground = ray_ground_depth(s.ground, col, row, f.calib, 1e9);
    if (ground) {
      EXPECT_LT(d, *ground);
    }
  }
}

TEST(Synth, RenderedDepthMatchesRayCast) {
  const auto f = synth_scene(small_spec(5));
  std::vector<Box3D> boxes;
  for (const auto& o : f.labels) boxes.push_back(o.box3d);
  Rng rng(281);
  for (int i = 0; i < 200; ++i) {
    const int r = static_cast<int>(rng.integer(0, f.calib.image_size.height - 1));
    const int c = static_cast<int>(rng.integer(0, f.calib.image_size.width - 1));
    std::optional<double> best = ray_ground_depth(small_spec(5).ground, c, r, f.calib, 80.0);
    for (const auto& b : boxes) {
      const auto d = ray_box_depth(b, c, r, f.calib);
      if (d && (!best || *d < *best)) best = d;
    }
    EXPECT_NEAR(f.dense_depth->at(r, c), best ? static_cast<float>(*best) : 0.0f, 1e-3);
  }
}

TEST(Synth, InfeasibleSceneThrows) {
  auto s = small_spec(1);
  s.min_boxes = s.max_boxes = 200;
  s.max_retries = 500;
  EXPECT_THROW(synth_scene(s), GenerationError);
}

TEST(Synth, InvalidSpecRejected) {
  auto s = small_spec(1);
  s.min_boxes = 5, s.max_boxes = 2;
  EXPECT_THROW(synth_scene(s), InvalidInput);
  s = small_spec(1);
  s.box_density = 0.0;
  EXPECT_THROW(synth_scene(s), InvalidInput);
  s = small_spec(1);
  s.length = {4, 3};
  EXPECT_THROW(synth_scene(s), InvalidInput);
}

TEST(Synth, FrameValidateChecksDepthSize) {
  auto f = synth_scene(small_spec(2));
  EXPECT_NO_THROW(f.validate());
  f.dense_depth = DenseDepthImage::filled(10, 10, 1.0f);
  EXPECT_THROW(f.validate(), InvalidInput);
}

// ---------------------------------------------------------------------------
// Augmentation

TEST(Augment, IdentityKeepsFrame) {
  const auto f = synth_scene(small_spec(8));
  const auto g = augment_frame(f, SimilarityTransform{});
  EXPECT_EQ(g.points, f.points);
  ASSERT_EQ(g.labels.size(), f.labels.size());
  for (std::size_t i = 0; i < f.labels.size(); ++i) EXPECT_EQ(g.labels[i].box3d, f.labels[i].box3d);
  ASSERT_TRUE(g.dense_depth);
  EXPECT_EQ(g.dense_depth->depth, f.dense_depth->depth);
}

TEST(Augment, RigidMotionPreservesDistances) {
  const auto f = synth_scene(small_spec(9));
  const SimilarityTransform t{0.07, 1.0, 0.6, -0.4};
  const auto g = augment_frame(f, t);
  EXPECT_FALSE(g.dense_depth);
  Rng rng(283);
  for (int i = 0; i < 500; ++i) {
    const auto a = rng.integer(0, static_cast<std::int64_t>(f.points.size()) - 1);
    const auto b = rng.integer(0, static_cast<std::int64_t>(f.points.size()) - 1);
    const double d0 = distance(f.points[a].p, f.points[b].p);
    const double d1 = distance(g.points[a].p, g.points[b].p);
    EXPECT_NEAR(d1, d0, 1e-9);
  }
}

TEST(Augment, SimilarityScalesDistancesAndDimensions) {
  const auto f = synth_scene(small_spec(10));
  const SimilarityTransform t{-0.05, 1.04, 0.0, 0.3};
  const auto g = augment_frame(f, t);
  for (std::size_t i = 0; i + 1 < f.points.size(); i += 97) {
    EXPECT_NEAR(distance(g.points[i].p, g.points[i + 1].p),
                1.04 * distance(f.points[i].p, f.points[i + 1].p), 1e-9);
  }
  for (std::size_t i = 0; i < f.labels.size(); ++i) {
    EXPECT_NEAR(g.labels[i].box3d.l, 1.04 * f.labels[i].box3d.l, 1e-12);
    EXPECT_NEAR(wrap_angle(g.labels[i].box3d.yaw - f.labels[i].box3d.yaw + 0.05), 0.0, 1e-12);
  }
}

TEST(Augment, PointsInsideBoxesStayInside) {
  const auto f = synth_scene(small_spec(13));
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto g = augment_frame(f, seed);
    for (std::size_t j = 0; j < f.labels.size(); ++j) {
      for (std::size_t i = 0; i < f.points.size(); ++i) {
        const bool before = inside_box(f.points[i].p, f.labels[j].box3d, 1e-6);
        if (before) {
          EXPECT_TRUE(inside_box(g.points[i].p, g.labels[j].box3d, 1e-6));
        }
      }
    }
  }
}

TEST(Augment, SeededAndBounded) {
  AugmentRanges r;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto t = sample_augmentation(r, seed);
    EXPECT_EQ(t.rotation, sample_augmentation(r, seed).rotation);
    EXPECT_LE(std::abs(t.rotation), r.max_rotation);
    EXPECT_LE(std::abs(t.tx), r.max_translation);
    EXPECT_LE(std::abs(t.ty), r.max_translation);
    EXPECT_GE(t.scale, r.scale.min);
    EXPECT_LE(t.scale, r.scale.max);
  }
  r.scale = {1.1, 1.0};
  EXPECT_THROW(sample_augmentation(r, 0), InvalidInput);
}

// ---------------------------------------------------------------------------
// Stand-in feature maps

TEST(StubFeatures, ConstantDepthGivesConstantChannel) {
  const auto calib = test::pinhole(100, 31.5, 23.5, {48, 64});
  const auto d = DenseDepthImage::filled(48, 64, 12.5f);
  const auto m = stub_image_feature_map({}, calib, &d, 8, 4);
  ASSERT_EQ(m.values.channels, 4);
  ASSERT_EQ(m.values.rows, 6);
  ASSERT_EQ(m.values.cols, 8);
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 8; ++c) {
      EXPECT_FLOAT_EQ(m.values.at(0, r, c), 1.25f);
      EXPECT_EQ(m.values.at(1, r, c), 0.0f);
    }
  }
  EXPECT_EQ(m.stride, 8.0);
}

TEST(StubFeatures, ImageClosedForms) {
  const auto f = synth_scene(small_spec(17));
  const int stride = 8;
  const auto m = stub_image_feature_map(f.points, f.calib, &*f.dense_depth, stride, 5);
  const auto again = stub_image_feature_map(f.points, f.calib, &*f.dense_depth, stride, 5);
  EXPECT_EQ(m.values, again.values);

  // Intensity sums per cell, brute force.
  const int rows = m.values.rows, cols = m.values.cols;
  EXPECT_EQ(rows, (f.calib.image_size.height + stride - 1) / stride);
  EXPECT_EQ(cols, (f.calib.image_size.width + stride - 1) / stride);
  std::vector<double> sums(static_cast<std::size_t>(rows * cols), 0.0);
  for (const auto& p : f.points) {
    const auto px = project_to_image(transform_to_camera(p.p, f.calib), f.calib);
    if (!px) continue;
    const double u = std::round(px->x), v = std::round(px->y);
    if (u < 0 || v < 0 || u >= f.calib.image_size.width || v >= f.calib.image_size.height) continue;
    sums[static_cast<std::size_t>(static_cast<int>(v) / stride * cols + static_cast<int>(u) / stride)] += p.intensity;
  }
  Rng rng(293);
  for (int i = 0; i < 100; ++i) {
    const int r = static_cast<int>(rng.integer(0, rows - 1)), c = static_cast<int>(rng.integer(0, cols - 1));
    const double u = (c + 0.5) * stride - 0.5, v = (r + 0.5) * stride - 0.5;
    const int dr = std::clamp(static_cast<int>(std::lround(v)), 0, f.calib.image_size.height - 1);
    const int dc = std::clamp(static_cast<int>(std::lround(u)), 0, f.calib.image_size.width - 1);
    EXPECT_FLOAT_EQ(m.values.at(0, r, c), static_cast<float>(f.dense_depth->at(dr, dc) / 10.0));
    EXPECT_NEAR(m.values.at(1, r, c), sums[static_cast<std::size_t>(r * cols + c)] / (stride * stride), 1e-5);
    for (int k = 2; k < 5; ++k) {
      EXPECT_NEAR(m.values.at(k, r, c), std::sin(2 * kPi * u / (32.0 * k)) * std::cos(2 * kPi * v / (32.0 * k)), 1e-6);
    }
  }
}

TEST(StubFeatures, BevClosedForms) {
  VoxelGridConfig g;
  g.x = {0, 8};
  g.y = {-4, 4};
  g.z = {-2, 2};
  g.nx = 16, g.ny = 16, g.nz = 4;
  BevTensor t{Tensor3<float>(4, 16, 16), g};
  Rng rng(307);
  for (auto& v : t.values.data) v = static_cast<float>(rng.uniform());
  const auto m = stub_bev_feature_map(t, 4);
  EXPECT_EQ(m.stride, 0.5);
  EXPECT_EQ(m.origin_x, 0.0);
  EXPECT_EQ(m.origin_y, -4.0);
  for (int i = 0; i < 100; ++i) {
    const int r = static_cast<int>(rng.integer(0, 15)), c = static_cast<int>(rng.integer(0, 15));
    double s0 = 0, s1 = 0;
    for (int z = 0; z < 4; ++z) {
      s0 += t.values.at(z, r, c);
      s1 += (z + 0.5) / 4 * t.values.at(z, r, c);
    }
    const double X = (c + 0.5) * 0.5, Y = -4 + (r + 0.5) * 0.5;
    EXPECT_FLOAT_EQ(m.values.at(0, r, c), static_cast<float>(s0));
    EXPECT_FLOAT_EQ(m.values.at(1, r, c), static_cast<float>(s1));
    for (int k = 2; k < 4; ++k) {
      EXPECT_NEAR(m.values.at(k, r, c), std::sin(2 * kPi * X / (4.0 * k)) * std::cos(2 * kPi * Y / (4.0 * k)), 1e-6);
    }
  }
  g.ny = 8;
  BevTensor bad{Tensor3<float>(4, 8, 16), g};
  EXPECT_THROW(stub_bev_feature_map(bad, 4), ConfigError);
}

// ---------------------------------------------------------------------------
// Frame directories

TEST(FrameDir, WriteReadRoundTrip) {
  test::TempDir dir("frames");
  auto a = synth_scene(small_spec(30));
  auto b = synth_scene(small_spec(31));
  b.dense_depth.reset();
  write_frame(dir.path, a);
  write_frame(dir.path, b);
  EXPECT_EQ(list_frames(dir.path), (std::vector<std::string>{a.frame_id, b.frame_id}));
  const auto a2 = read_frame(dir.path, a.frame_id);
  // Point files store float32 coordinates.
  ASSERT_EQ(a2.points.size(), a.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    EXPECT_EQ(a2.points[i].p.x, static_cast<float>(a.points[i].p.x));
    EXPECT_EQ(a2.points[i].p.z, static_cast<float>(a.points[i].p.z));
    EXPECT_EQ(a2.points[i].intensity, a.points[i].intensity);
  }
  ASSERT_TRUE(a2.dense_depth);
  EXPECT_EQ(a2.dense_depth->depth, a.dense_depth->depth);
  ASSERT_EQ(a2.labels.size(), a.labels.size());
  for (std::size_t i = 0; i < a.labels.size(); ++i) {
    EXPECT_NEAR(a2.labels[i].box3d.x, a.labels[i].box3d.x, 1e-5);
    EXPECT_NEAR(a2.labels[i].box3d.l, a.labels[i].box3d.l, 1e-5);
    EXPECT_EQ(a2.labels[i].occlusion, a.labels[i].occlusion);
  }
  EXPECT_FALSE(read_frame(dir.path, b.frame_id).dense_depth);
  EXPECT_THROW(read_frame(dir.path, "999999"), IoError);
}

}  // namespace
}  // namespace mmf
