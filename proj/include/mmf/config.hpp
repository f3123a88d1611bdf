#pragma once

// Pipeline configuration. Sources are layered: defaults, then a JSON file, then
// command-line overrides (flags > file > defaults). The schema lives in docs/.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmf/eval.hpp"
#include "mmf/fuse.hpp"
#include "mmf/ground.hpp"
#include "mmf/heads.hpp"
#include "mmf/io.hpp"
#include "mmf/post.hpp"
#include "mmf/synth.hpp"
#include "mmf/voxel.hpp"

namespace mmf {

struct FusionSettings {
  double radius = 2.0;
  GeometricFeatureMode geometric = GeometricFeatureMode::kOffset;
  /// Parameter file; when empty the MLP is initialised from `mlp_seed`.
  std::string mlp_file;
  std::uint64_t mlp_seed = 1;
  std::vector<int> hidden{64};
  bool use_pseudo_points = true;
  int pseudo_stride = 4;
};

struct FeatureSettings {
  int image_channels = 4;
  int bev_channels = 4;
};

struct DetectorSettings {
  /// Standard deviation of the oracle detector's center noise, meters.
  double center_noise = 0.0;
  double score_min = 0.5;
  double score_max = 1.0;
};

struct EvalSettings {
  std::vector<OverlapKind> overlaps{OverlapKind::k3D, OverlapKind::kBEV};
  std::vector<Difficulty> difficulties{Difficulty::kEasy, Difficulty::kModerate, Difficulty::kHard};
  std::vector<double> iou_thresholds{0.5, 0.7};
  int class_id = 0;
};

struct PipelineConfig {
  VoxelGridConfig grid;
  GroundBaselineOptions ground;
  FusionSettings fusion;
  FeatureSettings features;
  int roi_grid_n = 5;
  LossWeights loss;
  NmsOptions nms;
  EvalSettings eval;
  DetectorSettings detector;
  SceneSpec scene;
  AugmentRanges augment;
  bool augment_enabled = false;
  int frames = 4;
  /// 0 keeps the OpenMP default.
  int threads = 0;

  /// Cross-field checks; throws ConfigError.
  void validate() const;
};

/// Overlay the fields present in `j` onto `base`. Unknown keys are rejected.
PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig base = {});
nlohmann::ordered_json config_to_json(const PipelineConfig& cfg);

/// Parse a config document; JSON syntax errors become ParseError with a byte offset,
/// schema violations ConfigError.
PipelineConfig parse_config(std::string_view text, const std::string& source = "<memory>");
PipelineConfig load_config(const fs::path& path);

}  // namespace mmf
