#pragma once

// End-to-end orchestration: ground -> ground-relative voxelization -> sparse depth ->
// pseudo points -> correspondences -> fusion -> detector -> ground restore -> NMS ->
// oriented ROI features -> refinement targets -> evaluation.

#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mmf/config.hpp"
#include "mmf/depth.hpp"
#include "mmf/fuse.hpp"
#include "mmf/ground.hpp"
#include "mmf/roi.hpp"
#include "mmf/synth.hpp"

namespace mmf {

/// Failure inside a pipeline stage; `cause()` holds the original exception.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, std::string frame_id, std::exception_ptr cause);

  const std::string& stage() const { return stage_; }
  const std::string& frame_id() const { return frame_id_; }
  std::exception_ptr cause() const { return cause_; }

 private:
  std::string stage_;
  std::string frame_id_;
  std::exception_ptr cause_;
};

struct DetectorContext {
  const Frame& frame;
  const GroundHeightMap& ground;
  const BevTensor& bev;
  const FeatureMap& fused_bev;
  const PipelineConfig& cfg;
};

/// Returns boxes with ground-relative z.
using Detector = std::function<DetectionSet(const DetectorContext&)>;

/// Emits the frame's labels. Center noise uses common random numbers: each object draws a
/// fixed standard-normal pair from a stream keyed by (seed, frame id, object index), scaled
/// by the configured sigma, so sweeps over sigma move boxes along fixed directions.
/// `score_scale` maps the drawn score monotonically (for rescale-invariance checks).
Detector make_oracle_detector(std::uint64_t seed, std::function<double(double)> score_scale = {});

/// Ground height of the BEV cell containing (x, y), if inside the grid.
std::optional<double> ground_height_at(const GroundHeightMap& g, double x, double y);

/// Recomputed stages can be replaced by previously exported ones.
struct StageOverrides {
  std::optional<GroundHeightMap> ground;
  std::optional<BevTensor> bev;
};

struct FrameStages {
  GroundHeightMap ground;
  BevTensor bev;
  SparseDepthImage sparse_depth;
  FeatureMap image_features;  // aggregated multi-scale map
  FeatureMap fused_bev;
};

struct FrameLoss {
  FirstStageLoss first_stage;
  double r2d = 0.0;
  double r3d = 0.0;
  double depth = 0.0;
  double total = 0.0;
};

struct FrameResult {
  std::string frame_id;
  DetectionSet detections;  // after NMS, absolute z
  std::vector<Box2D> det_rects;
  /// Flattened [N][C][n][n] ROI features; rows of detections whose center left the map are zero.
  std::vector<float> roi_features;
  std::vector<unsigned char> roi_valid;
  /// Offsets to the best-overlapping ground truth; match -1 when there is none.
  std::vector<RefinementOffsets> refinement_targets;
  std::vector<int> refinement_match;
  FrameLoss loss;
  std::size_t lidar_points = 0;
  std::size_t pseudo_points = 0;
  std::size_t matched_cells = 0;
  std::size_t sparse_pixels = 0;
  std::optional<FrameStages> stages;
};

struct PipelineResult {
  std::vector<FrameResult> frames;  // ordered by frame id
  std::vector<EvalReportEntry> report;
};

/// The fusion MLP from cfg.fusion.mlp_file, or seeded He-uniform initialisation.
FusionMLP load_or_init_mlp(const PipelineConfig& cfg);

FrameResult run_frame(const Frame& frame, const PipelineConfig& cfg, const FusionMLP& mlp, const Detector& detector,
                      bool keep_stages = false, const StageOverrides& overrides = {});

/// Frames run in parallel (one worker per frame, kernels serial inside) when there is more
/// than one; results and the evaluation reduction are ordered by frame id.
PipelineResult run_pipeline(std::span<const Frame> frames, const PipelineConfig& cfg, const Detector& detector,
                            bool keep_stages = false);

std::vector<EvalReportEntry> evaluate_results(std::span<const FrameResult> results, std::span<const Frame> frames,
                                              const PipelineConfig& cfg);

/// cfg.frames synthetic frames; frame i uses scene seed mix_seed(seed, i) and id "%06d".
std::vector<Frame> synth_frames(const PipelineConfig& cfg, std::uint64_t seed);

/// detections/<id>.txt, report.json, report.txt, summary.json and, when stages were kept,
/// stages/<id>/... raw grids.
void write_pipeline_outputs(const fs::path& dir, const PipelineResult& result, std::span<const Frame> frames,
                            const PipelineConfig& cfg);

}  // namespace mmf
