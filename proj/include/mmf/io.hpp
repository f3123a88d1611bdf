#pragma once

// File formats. All binary payloads are little-endian; every reader reports malformed
// input as ParseError with a byte offset or line number.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mmf/depth.hpp"
#include "mmf/eval.hpp"
#include "mmf/fuse.hpp"
#include "mmf/geom.hpp"
#include "mmf/ground.hpp"
#include "mmf/tensor.hpp"
#include "mmf/voxel.hpp"

namespace mmf {

namespace fs = std::filesystem;

std::vector<std::byte> read_file_bytes(const fs::path& path);
std::string read_file_text(const fs::path& path);
void write_file_bytes(const fs::path& path, std::span<const std::byte> bytes);
void write_file_text(const fs::path& path, std::string_view text);

/// JSON parse whose failures are ParseErrors at a 0-based byte offset, shifted by `base`
/// when the document is embedded in a larger file.
nlohmann::json parse_json_document(std::string_view text, const std::string& source, std::uint64_t base = 0);

// ---------------------------------------------------------------------------
// Point clouds: [x, y, z, intensity] float32 records, no header.
// ---------------------------------------------------------------------------

struct LidarPoint {
  Point3D p;
  float intensity = 0.0f;
  friend bool operator==(const LidarPoint&, const LidarPoint&) = default;
};

std::vector<LidarPoint> parse_point_cloud(std::span<const std::byte> bytes, const std::string& source = "<memory>");
std::vector<std::byte> serialize_point_cloud(std::span<const LidarPoint> points);
std::vector<LidarPoint> read_point_cloud(const fs::path& path);
void write_point_cloud(const fs::path& path, std::span<const LidarPoint> points);

std::vector<Point3D> xyz_of(std::span<const LidarPoint> points);

// ---------------------------------------------------------------------------
// Object labels: KITTI text rows (camera frame), optional trailing score.
// ---------------------------------------------------------------------------

struct LabelRecord {
  std::string type;
  double truncated = 0.0;
  int occluded = 0;
  double alpha = 0.0;
  std::array<double, 4> bbox{};  // left, top, right, bottom
  double height = 0.0;
  double width = 0.0;
  double length = 0.0;
  std::array<double, 3> location{};  // bottom center, camera frame
  double rotation_y = 0.0;
  std::optional<double> score;
};

std::vector<LabelRecord> parse_labels(std::string_view text, const std::string& source = "<memory>");
std::string serialize_labels(std::span<const LabelRecord> labels);
std::vector<LabelRecord> read_labels(const fs::path& path);
void write_labels(const fs::path& path, std::span<const LabelRecord> labels);

/// Class ids used across the library; unknown names map to -1.
int class_id_from_name(std::string_view name);
std::string class_name_from_id(int id);

GroundTruthObject label_to_object(const LabelRecord& label, const CalibrationProfile& calib);
LabelRecord object_to_label(const GroundTruthObject& obj, const CalibrationProfile& calib,
                            std::optional<double> score = std::nullopt);
Detection label_to_detection(const LabelRecord& label, const CalibrationProfile& calib);

// ---------------------------------------------------------------------------
// Calibration: KITTI object calib text (P2, Tr_velo_to_cam, optional R0_rect) plus an
// optional `IMG_SIZE: height width` row. Unknown keys are ignored.
// ---------------------------------------------------------------------------

CalibrationProfile parse_calibration(std::string_view text, const std::string& source = "<memory>");
std::string serialize_calibration(const CalibrationProfile& calib);
CalibrationProfile read_calibration(const fs::path& path);
void write_calibration(const fs::path& path, const CalibrationProfile& calib);

// ---------------------------------------------------------------------------
// Raw float32 grids with a JSON sidecar at `<raw>.json`.
// ---------------------------------------------------------------------------

fs::path sidecar_path(const fs::path& raw);

void write_raw_grid(const fs::path& raw, std::span<const float> values, const std::vector<int>& shape,
                    const std::string& axis_order, nlohmann::ordered_json extra = nlohmann::ordered_json::object());

struct RawGrid {
  std::vector<int> shape;
  std::vector<float> values;
  nlohmann::json meta;
};

/// Parse a sidecar and its payload; validates dtype, byte order and payload size.
RawGrid parse_raw_grid(std::string_view sidecar, std::span<const std::byte> payload,
                       const std::string& source = "<memory>");
RawGrid read_raw_grid(const fs::path& raw);

nlohmann::ordered_json grid_to_json(const VoxelGridConfig& cfg);
VoxelGridConfig grid_from_json(const nlohmann::json& j);

void write_bev_tensor(const fs::path& raw, const BevTensor& t);
BevTensor read_bev_tensor(const fs::path& raw);

void write_feature_map(const fs::path& raw, const FeatureMap& m);
FeatureMap read_feature_map(const fs::path& raw);

/// Heights at `raw`, sidecar at `<raw>.json`, packed validity bits (LSB first) at `<raw>.mask`.
void write_ground_map(const fs::path& raw, const GroundHeightMap& g);
GroundHeightMap read_ground_map(const fs::path& raw);

void write_dense_depth(const fs::path& raw, const DenseDepthImage& d);
DenseDepthImage read_dense_depth(const fs::path& raw);

/// 16-bit grayscale PNG, meters = value / 256, 0 = no depth.
DenseDepthImage decode_depth_png(std::span<const std::byte> bytes, const std::string& source = "<memory>");
std::vector<std::byte> encode_depth_png(const DenseDepthImage& d);
/// Dispatches on extension: `.png` -> PNG importer, otherwise raw + sidecar.
DenseDepthImage read_depth_image(const fs::path& path);

// ---------------------------------------------------------------------------
// FusionMLP parameters: "MMFMLP01", u32 header length, JSON header, float32 blob
// (per layer: weights row-major, then biases).
// ---------------------------------------------------------------------------

std::vector<std::byte> serialize_mlp(const FusionMLP& mlp);
FusionMLP parse_mlp(std::span<const std::byte> bytes, const std::string& source = "<memory>");
void write_mlp(const fs::path& path, const FusionMLP& mlp);
FusionMLP read_mlp(const fs::path& path);

}  // namespace mmf
