#pragma once

// Frames, synthetic scenes and augmentation.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmf/depth.hpp"
#include "mmf/eval.hpp"
#include "mmf/geom.hpp"
#include "mmf/io.hpp"
#include "mmf/voxel.hpp"

namespace mmf {

struct Frame {
  std::string frame_id;
  std::vector<LidarPoint> points;  // LiDAR frame
  CalibrationProfile calib;
  std::vector<GroundTruthObject> labels;
  std::optional<DenseDepthImage> dense_depth;

  /// Throws InvalidInput when the depth image size disagrees with calib.image_size.
  void validate() const;
};

/// z = a * x + b * y + c in the LiDAR frame.
struct GroundPlane {
  double a = 0.0;
  double b = 0.0;
  double c = -1.73;

  double height(double x, double y) const { return a * x + b * y + c; }
};

struct SceneSpec {
  std::uint64_t seed = 0;
  int min_boxes = 3;
  int max_boxes = 8;
  AxisRange length{3.5, 4.7};
  AxisRange width{1.5, 1.9};
  AxisRange height{1.4, 1.7};
  /// Forward distance of box centers; lateral placement stays inside the camera view.
  AxisRange forward{5.0, 60.0};
  /// Minimum free space between footprints.
  double min_gap = 0.5;
  /// Samples per square meter.
  double box_density = 40.0;
  double ground_density = 1.0;
  /// Ground points cover the grid's x/y extent.
  VoxelGridConfig extent;
  GroundPlane ground;
  /// Half-width of the bounded uniform z noise, meters.
  double noise = 0.02;
  int max_retries = 2000;
  bool render_depth = true;
  double max_render_depth = 80.0;

  /// Throws InvalidInput on empty ranges or non-positive densities.
  void validate() const;
};

/// KITTI-like camera: fx = fy = 721.5377, principal point (609.5593, 172.854), 375 x 1242,
/// camera 0.27 m behind and 0.08 m below the LiDAR.
CalibrationProfile default_synthetic_calibration();

/// Deterministic per spec.seed. Boxes are class 0 ("Car"), resting on the ground plane.
/// Throws GenerationError when the boxes cannot be placed within max_retries draws.
Frame synth_scene(const SceneSpec& spec, const CalibrationProfile& calib = default_synthetic_calibration());

/// Depth along the optical axis of the first hit of the ray through pixel (u, v), or
/// nullopt. Ground hits beyond max_depth are dropped.
std::optional<double> ray_box_depth(const Box3D& box, double u, double v, const CalibrationProfile& calib);
std::optional<double> ray_ground_depth(const GroundPlane& ground, double u, double v, const CalibrationProfile& calib,
                                       double max_depth);

/// Per-pixel nearest of the box and ground hits; 0 where nothing is hit.
DenseDepthImage render_depth(std::span<const Box3D> boxes, const GroundPlane& ground, const CalibrationProfile& calib,
                             double max_depth);

struct AugmentRanges {
  double max_rotation = 5.0 * kPi / 180.0;  // radians, symmetric
  double max_translation = 1.0;            // meters, symmetric in x and y
  AxisRange scale{0.95, 1.05};
};

struct SimilarityTransform {
  double rotation = 0.0;
  double scale = 1.0;
  double tx = 0.0;
  double ty = 0.0;

  Point3D apply(const Point3D& p) const;
  bool is_identity() const { return rotation == 0.0 && scale == 1.0 && tx == 0.0 && ty == 0.0; }
};

SimilarityTransform sample_augmentation(const AugmentRanges& ranges, std::uint64_t seed);

/// Apply the transform to points and 3D labels, then re-derive the 2D rectangles and
/// truncation by projection. The dense depth image cannot be re-rendered from the frame
/// alone, so it is dropped unless the transform is the identity.
Frame augment_frame(const Frame& f, const SimilarityTransform& t);
Frame augment_frame(const Frame& f, std::uint64_t seed, const AugmentRanges& ranges = {});

/// Fraction of the unclipped projected rectangle that lies outside the image.
double truncation_fraction(const Box3D& b, const CalibrationProfile& calib);

// ---------------------------------------------------------------------------
// Frame directories: velodyne/<id>.bin, label_2/<id>.txt, calib/<id>.txt and optional
// depth/<id>.bin (raw float32 + sidecar) or depth/<id>.png.
// ---------------------------------------------------------------------------

void write_frame(const fs::path& dir, const Frame& f);
Frame read_frame(const fs::path& dir, const std::string& frame_id);
/// Frame ids present under velodyne/, sorted.
std::vector<std::string> list_frames(const fs::path& dir);

}  // namespace mmf
