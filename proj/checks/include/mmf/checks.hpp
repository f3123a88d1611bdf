#pragma once

// Independent oracles (Monte-Carlo, brute force, finite differences) and the check runners
// built on them. Nothing here is used by the library itself.

#include <cstdint>
#include <string>
#include <vector>

#include "mmf/eval.hpp"
#include "mmf/geom.hpp"
#include "mmf/post.hpp"
#include "mmf/random.hpp"

namespace mmf::checks {

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;      // worst observed error (or the measured quantity)
  double tolerance = 0.0;
  std::string detail;
};

std::string format_result(const CheckResult& r);

// ---------------------------------------------------------------------------
// Oracles

/// Hit-or-miss IoU estimate from `samples` uniform draws over the union's bounding box.
double monte_carlo_iou_bev(const OrientedBoxBEV& a, const OrientedBoxBEV& b, std::int64_t samples, Rng& rng);
double monte_carlo_iou_3d(const Box3D& a, const Box3D& b, std::int64_t samples, Rng& rng);

/// Greedy matching written out directly from the matching rules.
std::vector<MatchFlag> brute_force_flags(const FrameInput& frame, const EvalConfig& cfg, int class_id,
                                         std::size_t* counted_gt);
/// 11-point AP by scanning every curve point per recall level.
double brute_force_ap(const std::vector<ScoredFlag>& flags, std::size_t counted_gt);

/// O(n^2) list-based reference of oriented NMS.
DetectionSet reference_nms(const DetectionSet& dets, const NmsOptions& opts);

/// Random box generators used by several checks.
OrientedBoxBEV random_bev_box(Rng& rng, double spread = 3.0);
Box3D random_box3d(Rng& rng, double spread = 3.0);

// ---------------------------------------------------------------------------
// Check runners

CheckResult check_rotated_iou(int pairs, std::int64_t samples, std::uint64_t seed);
CheckResult check_rotated_iou_45deg();
CheckResult check_iou_3d(int pairs, std::int64_t samples, std::uint64_t seed);
CheckResult check_roi_gradients(int configs, std::uint64_t seed);
CheckResult check_mlp_gradients(int configs, std::uint64_t seed);
CheckResult check_voxel_mass(int points, std::uint64_t seed);
CheckResult check_voxel_weights(int points, std::uint64_t seed);
CheckResult check_voxel_permutation(int points, std::uint64_t seed);
CheckResult check_ap_oracle(int cases, std::uint64_t seed);
CheckResult check_ap_hand_case();
CheckResult check_default_grid();
CheckResult check_sparse_depth(int points, std::uint64_t seed);
CheckResult check_nms_reference(int sets, int detections, std::uint64_t seed);
CheckResult check_nms_idempotent(int sets, int detections, std::uint64_t seed);

/// Mutation fuzzing of one file parser: `inputs` mutants of a valid seed document. Each must
/// parse or fail with a ParseError whose byte or line position lies within the input (config
/// schema violations may instead raise ConfigError naming the key path). Parsers: point_cloud,
/// labels, calibration, raw_grid, mlp, png, config.
CheckResult check_fuzz_parser(const std::string& parser, int inputs, std::uint64_t seed);
std::vector<CheckResult> run_fuzz_suite(int inputs, std::uint64_t seed);

/// The full brute-force suite (sizes scaled by `scale` in (0, 1]).
std::vector<CheckResult> run_oracle_suite(std::uint64_t seed, double scale = 1.0);

}  // namespace mmf::checks
