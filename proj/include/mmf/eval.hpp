#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mmf/geom.hpp"
#include "mmf/post.hpp"

namespace mmf {

struct GroundTruthObject {
  Box3D box3d;
  Box2D box2d;
  double truncation = 0.0;  // [0, 1]
  int occlusion = 0;        // 0..3
  int class_id = 0;
};

enum class Difficulty : int { kEasy = 0, kModerate = 1, kHard = 2 };
enum class OverlapKind : int { k2D = 0, kBEV = 1, k3D = 2 };

const char* to_string(Difficulty d);
const char* to_string(OverlapKind k);

struct DifficultyLimits {
  double min_height_px;
  int max_occlusion;
  double max_truncation;
};

/// KITTI benchmark convention.
DifficultyLimits difficulty_limits(Difficulty d);

enum class GtStatus : unsigned char { kCounted, kIgnored };

GtStatus difficulty_filter(const GroundTruthObject& gt, Difficulty level);

struct EvalConfig {
  OverlapKind overlap = OverlapKind::k3D;
  Difficulty difficulty = Difficulty::kModerate;
  /// Per-class IoU threshold; classes absent here use `default_iou_threshold`.
  std::map<int, double> iou_threshold;
  double default_iou_threshold = 0.7;

  double threshold_for(int class_id) const;
};

enum class MatchFlag : unsigned char { kTP, kFP, kIgnored };

/// Overlap between a detection and a ground-truth object under `kind`. For 2D overlap the
/// detection's image rectangle must be supplied by the caller.
double overlap(OverlapKind kind, const Detection& det, const Box2D& det_rect, const GroundTruthObject& gt);

struct FrameInput {
  DetectionSet detections;       // single class
  std::vector<Box2D> det_rects;  // image rectangles, parallel to detections (2D overlap only)
  std::vector<GroundTruthObject> ground_truth;
};

struct FrameMatch {
  std::vector<MatchFlag> flags;  // parallel to detections
  std::size_t counted_gt = 0;
};

/// Greedy one-to-one matching: detections in descending score (stable) claim the unmatched
/// counted GT with the highest IoU >= threshold (ties: lowest GT index). A detection with no
/// such GT but IoU >= threshold against an ignored GT is ignored; otherwise it is a false
/// positive. Ignored GTs are never consumed.
FrameMatch match_detections(const FrameInput& frame, const EvalConfig& cfg, int class_id);

struct ScoredFlag {
  double score = 0.0;
  MatchFlag flag = MatchFlag::kFP;
};

struct PRPoint {
  double recall = 0.0;
  double precision = 0.0;
};

struct APResult {
  double ap = 0.0;
  std::vector<PRPoint> curve;
  std::array<double, 11> interpolated{};
  /// Set when there was no counted ground truth; AP is then reported as 0.
  bool no_ground_truth = false;
};

/// 11-point interpolated AP: mean over r in {0, 0.1, ..., 1} of the maximum precision at
/// recall >= r. Ignored detections are skipped; equal scores keep the given order.
APResult ap_11point(std::span<const ScoredFlag> flags, std::size_t total_counted_gt);

struct EvalReportEntry {
  std::string class_name;
  int class_id = 0;
  Difficulty difficulty = Difficulty::kModerate;
  OverlapKind overlap = OverlapKind::k3D;
  double iou_threshold = 0.7;
  APResult result;
};

/// Evaluate one class over many frames (frames are reduced in the given order).
APResult evaluate_class(std::span<const FrameInput> frames, const EvalConfig& cfg, int class_id);

std::string report_to_json(std::span<const EvalReportEntry> entries);
/// Fixed-width table: one row per (class, overlap, threshold), easy / moderate / hard columns.
std::string report_to_table(std::span<const EvalReportEntry> entries);

}  // namespace mmf
