#include <gtest/gtest.h>

#include <cstring>

#include "mmf/errors.hpp"
#include "mmf/io.hpp"
#include "mmf/synth.hpp"
#include "support.hpp"

namespace mmf {
namespace {

std::vector<std::byte> bytes_of(const std::vector<float>& v) {
  std::vector<std::byte> b(v.size() * 4);
  std::memcpy(b.data(), v.data(), b.size());
  return b;
}

template <class F>
ParseError parse_error(F&& f) {
  try {
    f();
  } catch (const ParseError& e) {
    return e;
  }
  ADD_FAILURE() << "no ParseError thrown";
  return ParseError("", ParseError::Unit::kNone, 0, "");
}

// ---------------------------------------------------------------------------
// Point clouds

TEST(PointCloud, EmptyFile) { EXPECT_TRUE(parse_point_cloud({}).empty()); }

TEST(PointCloud, TwoKnownRecords) {
  const std::vector<float> raw{1.5f, -2.0f, 0.25f, 0.5f, 10.0f, 20.0f, -1.0f, 0.0f};
  const auto pts = parse_point_cloud(bytes_of(raw));
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[0], (LidarPoint{{1.5, -2.0, 0.25}, 0.5f}));
  EXPECT_EQ(pts[1], (LidarPoint{{10.0, 20.0, -1.0}, 0.0f}));
}

TEST(PointCloud, LittleEndianLayout) {
  const auto b = serialize_point_cloud(std::vector<LidarPoint>{{{1.0, 0, 0}, 0.0f}});
  ASSERT_EQ(b.size(), 16u);
  // 1.0f = 0x3f800000, little-endian.
  EXPECT_EQ(b[0], std::byte{0x00});
  EXPECT_EQ(b[2], std::byte{0x80});
  EXPECT_EQ(b[3], std::byte{0x3f});
}

TEST(PointCloud, RoundTrip) {
  Rng rng(251);
  std::vector<LidarPoint> pts(100000);
  for (auto& p : pts) {
    p = {{static_cast<float>(rng.uniform(-80, 80)), static_cast<float>(rng.uniform(-80, 80)),
          static_cast<float>(rng.uniform(-5, 5))},
         static_cast<float>(rng.uniform())};
  }
  test::TempDir dir("pc");
  write_point_cloud(dir / "a.bin", pts);
  EXPECT_EQ(read_point_cloud(dir / "a.bin"), pts);
}

TEST(PointCloud, TruncatedFileReportsOffset) {
  auto b = bytes_of({1, 2, 3, 4, 5, 6, 7, 8});
  b.resize(27);
  const auto e = parse_error([&] { parse_point_cloud(b); });
  EXPECT_EQ(e.unit(), ParseError::Unit::kByte);
  EXPECT_EQ(e.position(), 16u);
}

TEST(PointCloud, NaNRecordRejectedWithIndex) {
  const auto b = bytes_of({1, 2, 3, 4, 5, NAN, 7, 8, 9, 10, 11, 12});
  const auto e = parse_error([&] { parse_point_cloud(b); });
  EXPECT_EQ(e.unit(), ParseError::Unit::kByte);
  EXPECT_EQ(e.position(), 16u);
  EXPECT_NE(std::string(e.what()).find("record 1"), std::string::npos) << e.what();
}

TEST(PointCloud, MissingFileIsIoError) {
  EXPECT_THROW(read_point_cloud("/nonexistent/x.bin"), IoError);
}

// ---------------------------------------------------------------------------
// Labels

constexpr const char* kLabelLine =
    "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59\n";

TEST(Labels, EmptyText) { EXPECT_TRUE(parse_labels("").empty()); }

TEST(Labels, FixtureLine) {
  const auto l = parse_labels(kLabelLine);
  ASSERT_EQ(l.size(), 1u);
  const auto& r = l[0];
  EXPECT_EQ(r.type, "Car");
  EXPECT_EQ(r.truncated, 0.0);
  EXPECT_EQ(r.occluded, 0);
  EXPECT_EQ(r.alpha, -1.58);
  EXPECT_EQ(r.bbox, (std::array<double, 4>{587.01, 173.33, 614.12, 200.12}));
  EXPECT_EQ(r.height, 1.65);
  EXPECT_EQ(r.width, 1.67);
  EXPECT_EQ(r.length, 3.64);
  EXPECT_EQ(r.location, (std::array<double, 3>{-0.65, 1.71, 46.70}));
  EXPECT_EQ(r.rotation_y, -1.59);
  EXPECT_FALSE(r.score);
}

TEST(Labels, ScoreAndUnknownClassPreserved) {
  const auto l = parse_labels("Tram 0.5 2 0.1 1 2 3 4 1.5 2.5 10.0 1 2 3 0.2 0.875\r\n\n");
  ASSERT_EQ(l.size(), 1u);
  EXPECT_EQ(l[0].type, "Tram");
  ASSERT_TRUE(l[0].score);
  EXPECT_EQ(*l[0].score, 0.875);
  EXPECT_EQ(serialize_labels(l).substr(0, 5), "Tram ");
  EXPECT_EQ(class_id_from_name("Tram"), -1);
}

TEST(Labels, WrongFieldCountReportsLine) {
  const auto e = parse_error([] { parse_labels(std::string(kLabelLine) + "Car 0 0 0 1 2 3\n"); });
  EXPECT_EQ(e.unit(), ParseError::Unit::kLine);
  EXPECT_EQ(e.position(), 2u);
}

TEST(Labels, BadNumberReportsLine) {
  const auto e = parse_error([] { parse_labels(std::string(kLabelLine) + kLabelLine + "Car x 0 0 1 2 3 4 1 1 1 0 0 5 0\n"); });
  EXPECT_EQ(e.unit(), ParseError::Unit::kLine);
  EXPECT_EQ(e.position(), 3u);
}

TEST(Labels, WriteReadIdempotent) {
  Rng rng(257);
  const char* names[] = {"Car", "Pedestrian", "Cyclist", "Van", "Misc", "DontCare"};
  std::vector<LabelRecord> labels(100);
  for (auto& r : labels) {
    r.type = names[rng.integer(0, 5)];
    r.truncated = rng.uniform();
    r.occluded = static_cast<int>(rng.integer(0, 3));
    r.alpha = rng.uniform(-kPi, kPi);
    r.bbox = {rng.uniform(0, 600), rng.uniform(0, 150), rng.uniform(600, 1200), rng.uniform(150, 370)};
    r.height = rng.uniform(1, 3), r.width = rng.uniform(1, 3), r.length = rng.uniform(1, 6);
    r.location = {rng.uniform(-20, 20), rng.uniform(0, 3), rng.uniform(2, 70)};
    r.rotation_y = rng.uniform(-kPi, kPi);
    if (rng.uniform() < 0.5) r.score = rng.uniform();
  }
  test::TempDir dir("labels");
  write_labels(dir / "a.txt", labels);
  const auto once = read_labels(dir / "a.txt");
  write_labels(dir / "b.txt", once);
  EXPECT_EQ(read_file_text(dir / "a.txt"), read_file_text(dir / "b.txt"));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    EXPECT_EQ(once[i].type, labels[i].type);
    EXPECT_NEAR(once[i].location[2], labels[i].location[2], 5e-7);
    EXPECT_NEAR(once[i].rotation_y, labels[i].rotation_y, 5e-7);
    EXPECT_EQ(once[i].score.has_value(), labels[i].score.has_value());
  }
}

TEST(Labels, ObjectConversionRoundTrip) {
  const auto calib = default_synthetic_calibration();
  Rng rng(263);
  for (int i = 0; i < 200; ++i) {
    GroundTruthObject o;
    o.box3d = {rng.uniform(5, 60), rng.uniform(-20, 20), rng.uniform(-2, 0), rng.uniform(1.4, 2), rng.uniform(3, 5),
               rng.uniform(1.3, 1.8), rng.uniform(-kPi, kPi)};
    o.box2d = {500, 180, 80, 60};
    o.truncation = 0.25;
    o.occlusion = 1;
    o.class_id = 0;
    const auto back = label_to_object(object_to_label(o, calib, 0.5), calib);
    EXPECT_NEAR(back.box3d.x, o.box3d.x, 1e-9);
    EXPECT_NEAR(back.box3d.y, o.box3d.y, 1e-9);
    EXPECT_NEAR(back.box3d.z, o.box3d.z, 1e-9);
    EXPECT_NEAR(back.box3d.l, o.box3d.l, 1e-12);
    EXPECT_NEAR(wrap_angle(back.box3d.yaw - o.box3d.yaw), 0.0, 1e-9);
    EXPECT_EQ(back.class_id, 0);
    // Through text the geometry survives at the file's 6-decimal precision.
    const auto text = label_to_object(parse_labels(serialize_labels(std::vector{object_to_label(o, calib)}))[0], calib);
    EXPECT_NEAR(text.box3d.x, o.box3d.x, 1e-5);
    EXPECT_NEAR(text.box3d.y, o.box3d.y, 1e-5);
  }
}

// ---------------------------------------------------------------------------
// Calibration

constexpr const char* kKittiCalib =
    "P0: 7.215377e+02 0.000000e+00 6.095593e+02 0.000000e+00 0.000000e+00 7.215377e+02 1.728540e+02 "
    "0.000000e+00 0.000000e+00 0.000000e+00 1.000000e+00 0.000000e+00\n"
    "P2: 7.215377e+02 0.000000e+00 6.095593e+02 4.485728e+01 0.000000e+00 7.215377e+02 1.728540e+02 "
    "2.163791e-01 0.000000e+00 0.000000e+00 1.000000e+00 2.745884e-03\n"
    "R0_rect: 9.999239e-01 9.837760e-03 -7.445048e-03 -9.869795e-03 9.999421e-01 -4.278459e-03 "
    "7.402527e-03 4.351614e-03 9.999631e-01\n"
    "Tr_velo_to_cam: 7.533745e-03 -9.999714e-01 -6.166020e-04 -4.069766e-03 1.480249e-02 7.280733e-04 "
    "-9.998902e-01 -7.631618e-02 9.998621e-01 7.523790e-03 1.480755e-02 -2.717806e-01\n"
    "Tr_imu_to_velo: 9.999976e-01 7.553071e-04 -2.035826e-03 -8.086759e-01 -7.854027e-04 9.998898e-01 "
    "-1.482298e-02 3.195559e-01 2.024406e-03 1.482454e-02 9.998881e-01 -7.997231e-01\n";

TEST(Calibration, ParsesKittiFile) {
  const auto c = parse_calibration(kKittiCalib);
  EXPECT_EQ(c.intrinsics.fx, 721.5377);
  EXPECT_EQ(c.intrinsics.cy, 172.854);
  ASSERT_TRUE(c.rectification);
  EXPECT_TRUE(is_rotation(c.lidar_to_cam.rotation));
  // A point 20 m ahead projects near the principal column.
  const auto px = project_to_image(transform_to_camera({20, 0, 0}, c), c);
  ASSERT_TRUE(px);
  EXPECT_NEAR(px->x, 609.5593 + 44.85728 / 20, 3.0);
}

TEST(Calibration, ProjectionMatchesFullMatrixProduct) {
  const auto c = parse_calibration(kKittiCalib);
  // P2 * R0 * Tr * [x y z 1], written out from the file's numbers.
  const double p2[12] = {7.215377e+02, 0, 6.095593e+02, 4.485728e+01, 0, 7.215377e+02, 1.728540e+02, 2.163791e-01, 0, 0, 1, 2.745884e-03};
  const double r0[9] = {9.999239e-01, 9.837760e-03, -7.445048e-03, -9.869795e-03, 9.999421e-01, -4.278459e-03, 7.402527e-03, 4.351614e-03, 9.999631e-01};
  const double tr[12] = {7.533745e-03, -9.999714e-01, -6.166020e-04, -4.069766e-03, 1.480249e-02, 7.280733e-04, -9.998902e-01, -7.631618e-02, 9.998621e-01, 7.523790e-03, 1.480755e-02, -2.717806e-01};
  Rng rng(269);
  for (int i = 0; i < 100; ++i) {
    const double p[4] = {rng.uniform(5, 60), rng.uniform(-15, 15), rng.uniform(-2, 1), 1.0};
    double a[3], b[3], q[3];
    for (int r = 0; r < 3; ++r) a[r] = tr[4 * r] * p[0] + tr[4 * r + 1] * p[1] + tr[4 * r + 2] * p[2] + tr[4 * r + 3];
    for (int r = 0; r < 3; ++r) b[r] = r0[3 * r] * a[0] + r0[3 * r + 1] * a[1] + r0[3 * r + 2] * a[2];
    for (int r = 0; r < 3; ++r) q[r] = p2[4 * r] * b[0] + p2[4 * r + 1] * b[1] + p2[4 * r + 2] * b[2] + p2[4 * r + 3];
    const auto px = project_to_image(transform_to_camera({p[0], p[1], p[2]}, c), c);
    ASSERT_TRUE(px);
    // Tolerance covers re-orthonormalisation of the 7-digit rotations.
    EXPECT_NEAR(px->x, q[0] / q[2], 0.05);
    EXPECT_NEAR(px->y, q[1] / q[2], 0.05);
  }
}

TEST(Calibration, SerializeRoundTrip) {
  const auto c = parse_calibration(kKittiCalib);
  const auto d = parse_calibration(serialize_calibration(c));
  EXPECT_EQ(d.intrinsics.fx, c.intrinsics.fx);
  EXPECT_TRUE(d.lidar_to_cam.rotation.isApprox(c.lidar_to_cam.rotation, 1e-15));
  EXPECT_LT((d.lidar_to_cam.translation - c.lidar_to_cam.translation).norm(), 1e-12);
  EXPECT_EQ(d.image_size, c.image_size);
}

TEST(Calibration, ImageSizeRow) {
  const auto c = parse_calibration(std::string(kKittiCalib) + "IMG_SIZE: 370 1224\n");
  EXPECT_EQ(c.image_size, (ImageSize{370, 1224}));
}

TEST(Calibration, MissingKeyReportsEndOfFile) {
  const auto e = parse_error([] { parse_calibration("P2: 1 0 0 0 0 1 0 0 0 0 1 0\n"); });
  EXPECT_EQ(e.unit(), ParseError::Unit::kLine);
  EXPECT_EQ(e.position(), 2u);
  EXPECT_NE(std::string(e.what()).find("Tr_velo_to_cam"), std::string::npos);
}

TEST(Calibration, BadValueReportsLine) {
  const auto e = parse_error([] { parse_calibration("P2: 1 0 0 0 0 1 0 0 0 0 1 0\nTr_velo_to_cam: 1 0 0 0 0 1 0 0 0 0 z 0\n"); });
  EXPECT_EQ(e.unit(), ParseError::Unit::kLine);
  EXPECT_EQ(e.position(), 2u);
}

TEST(Calibration, NonRotationRejected) {
  const auto e = parse_error([] { parse_calibration("P2: 1 0 0 0 0 1 0 0 0 0 1 0\nTr_velo_to_cam: 2 0 0 0 0 1 0 0 0 0 1 0\n"); });
  EXPECT_EQ(e.unit(), ParseError::Unit::kLine);
  EXPECT_EQ(e.position(), 2u);
}

// ---------------------------------------------------------------------------
// Raw grids and typed exports

TEST(RawGrid, RoundTripAndSidecar) {
  test::TempDir dir("raw");
  const std::vector<float> v{1, 2, 3, 4, 5, 6};
  write_raw_grid(dir / "g.bin", v, {2, 3}, "row,col", {{"note", "x"}});
  const auto g = read_raw_grid(dir / "g.bin");
  EXPECT_EQ(g.values, v);
  EXPECT_EQ(g.shape, (std::vector<int>{2, 3}));
  EXPECT_EQ(g.meta["dtype"], "float32");
  EXPECT_EQ(g.meta["byte_order"], "little");
  EXPECT_EQ(g.meta["axis_order"], "row,col");
  EXPECT_EQ(g.meta["note"], "x");
}

TEST(RawGrid, PayloadSizeMismatch) {
  const auto payload = bytes_of({1, 2, 3});
  const auto e = parse_error([&] {
    parse_raw_grid(R"({"shape":[2,2],"axis_order":"r,c","dtype":"float32","byte_order":"little"})", payload);
  });
  EXPECT_EQ(e.unit(), ParseError::Unit::kByte);
}

TEST(RawGrid, BadSidecarJson) {
  const auto e = parse_error([] { parse_raw_grid("{\"shape\": [1,", bytes_of({1})); });
  EXPECT_EQ(e.unit(), ParseError::Unit::kByte);
  EXPECT_THROW(parse_raw_grid(R"({"shape":[1],"axis_order":"x","dtype":"float64","byte_order":"little"})", bytes_of({1, 2})),
               ParseError);
}

TEST(TypedGrids, BitExactRoundTrips) {
  test::TempDir dir("typed");
  Rng rng(271);
  VoxelGridConfig g;
  g.x = {0, 4};
  g.y = {-2, 2};
  g.z = {-1, 1};
  g.nx = 16, g.ny = 16, g.nz = 8;

  BevTensor t{Tensor3<float>(8, 16, 16), g};
  for (auto& v : t.values.data) v = static_cast<float>(rng.uniform());
  write_bev_tensor(dir / "bev.bin", t);
  const auto t2 = read_bev_tensor(dir / "bev.bin");
  EXPECT_EQ(t2.values, t.values);
  EXPECT_EQ(t2.grid, g);

  FeatureMap m;
  m.values = Tensor3<float>(3, 5, 7);
  for (auto& v : m.values.data) v = static_cast<float>(rng.uniform(-1, 1));
  m.stride = 0.25, m.origin_x = 1.5, m.origin_y = -3.0;
  write_feature_map(dir / "f.bin", m);
  const auto m2 = read_feature_map(dir / "f.bin");
  EXPECT_EQ(m2.values, m.values);
  EXPECT_EQ(m2.stride, 0.25);
  EXPECT_EQ(m2.origin_x, 1.5);
  EXPECT_EQ(m2.origin_y, -3.0);

  auto gm = GroundHeightMap::zeros(g);
  for (std::size_t i = 0; i < gm.heights.size(); ++i) {
    gm.heights[i] = static_cast<float>(rng.uniform(-2, 0));
    gm.valid[i] = rng.uniform() < 0.7;
  }
  write_ground_map(dir / "ground.bin", gm);
  const auto gm2 = read_ground_map(dir / "ground.bin");
  EXPECT_EQ(gm2.heights, gm.heights);
  EXPECT_EQ(gm2.valid, gm.valid);
  EXPECT_EQ(gm2.grid, g);

  auto d = DenseDepthImage::filled(9, 11, 0.0f);
  for (auto& v : d.depth) v = static_cast<float>(rng.uniform(0, 80));
  write_dense_depth(dir / "d.bin", d);
  const auto d2 = read_dense_depth(dir / "d.bin");
  EXPECT_EQ(d2.depth, d.depth);
  EXPECT_EQ(d2.height, 9);
  EXPECT_EQ(d2.width, 11);
}

TEST(DepthPng, QuantisedRoundTrip) {
  Rng rng(277);
  auto d = DenseDepthImage::filled(20, 30, 0.0f);
  for (auto& v : d.depth) v = rng.uniform() < 0.2 ? 0.0f : static_cast<float>(rng.uniform(0.5, 200));
  const auto back = decode_depth_png(encode_depth_png(d));
  ASSERT_EQ(back.height, 20);
  ASSERT_EQ(back.width, 30);
  for (std::size_t i = 0; i < d.depth.size(); ++i) {
    if (d.depth[i] == 0.0f) {
      EXPECT_EQ(back.depth[i], 0.0f);
    } else {
      EXPECT_NEAR(back.depth[i], d.depth[i], 0.5 / 256 + 1e-6);
    }
  }
  test::TempDir dir("png");
  const auto bytes = encode_depth_png(d);
  write_file_bytes(dir / "x.png", bytes);
  EXPECT_EQ(read_depth_image(dir / "x.png").depth, back.depth);
}

TEST(DepthPng, GarbageIsParseError) {
  const std::vector<std::byte> junk(40, std::byte{0x42});
  EXPECT_THROW(decode_depth_png(junk), ParseError);
}

// ---------------------------------------------------------------------------
// MLP parameters

TEST(MlpFile, RoundTrip) {
  auto m = FusionMLP::random({7, 64, 4}, 5);
  // Parameters are stored as float32; snap them first so the comparison is exact.
  for (auto& l : m.layers) {
    for (auto& w : l.weight) w = static_cast<float>(w);
    for (auto& b : l.bias) b = static_cast<float>(b);
  }
  const auto bytes = serialize_mlp(m);
  EXPECT_EQ(std::string(reinterpret_cast<const char*>(bytes.data()), 8), "MMFMLP01");
  const auto back = parse_mlp(bytes);
  ASSERT_EQ(back.sizes(), m.sizes());
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    EXPECT_EQ(back.layers[i].weight, m.layers[i].weight);
    EXPECT_EQ(back.layers[i].bias, m.layers[i].bias);
  }
}

TEST(MlpFile, TruncatedBlob) {
  auto bytes = serialize_mlp(FusionMLP::random({3, 2}, 1));
  bytes.resize(bytes.size() - 3);
  const auto e = parse_error([&] { parse_mlp(bytes); });
  EXPECT_EQ(e.unit(), ParseError::Unit::kByte);
}

TEST(MlpFile, BadMagic) {
  auto bytes = serialize_mlp(FusionMLP::random({3, 2}, 1));
  bytes[0] = std::byte{'X'};
  const auto e = parse_error([&] { parse_mlp(bytes); });
  EXPECT_EQ(e.unit(), ParseError::Unit::kByte);
  EXPECT_EQ(e.position(), 0u);
}

}  // namespace
}  // namespace mmf
