#include "mmf/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "mmf/errors.hpp"
#include "mmf/features.hpp"
#include "mmf/heads.hpp"
#include "mmf/post.hpp"
#include "mmf/random.hpp"

namespace mmf {
namespace {

std::string describe(const std::exception_ptr& p) {
  try {
    std::rethrow_exception(p);
  } catch (const std::exception& e) {
    return e.what();
  } catch (...) {
    return "unknown error";
  }
}

template <class F>
auto stage(const char* name, const std::string& frame_id, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (...) {
    throw StageError(name, frame_id, std::current_exception());
  }
}

std::uint64_t hash_id(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

Box2D image_rect_or_empty(const Box3D& b, const CalibrationProfile& calib) {
  const auto r = project_box3d_to_image_rect(b, calib);
  return r ? *r : Box2D{0.0, 0.0, 0.0, 0.0};
}

}  // namespace

StageError::StageError(std::string stage, std::string frame_id, std::exception_ptr cause)
    : std::runtime_error("stage '" + stage + "' (frame " + frame_id + "): " + describe(cause)),
      stage_(std::move(stage)),
      frame_id_(std::move(frame_id)),
      cause_(std::move(cause)) {}

std::optional<double> ground_height_at(const GroundHeightMap& g, double x, double y) {
  const auto cell = bev_cell_index(x, y, g.grid);
  if (!cell) return std::nullopt;
  return static_cast<double>(g.at((*cell)[0], (*cell)[1]));
}

Detector make_oracle_detector(std::uint64_t seed, std::function<double(double)> score_scale) {
  return [seed, score_scale](const DetectorContext& ctx) {
    const auto& d = ctx.cfg.detector;
    const std::uint64_t frame_seed = mix_seed(seed, hash_id(ctx.frame.frame_id));
    DetectionSet out;
    for (std::size_t i = 0; i < ctx.frame.labels.size(); ++i) {
      const auto& obj = ctx.frame.labels[i];
      if (obj.class_id < 0) continue;
      Rng rng(mix_seed(frame_seed, i));
      const double nx = rng.normal();
      const double ny = rng.normal();
      double score = rng.uniform(d.score_min, d.score_max);
      if (score_scale) score = score_scale(score);
      Box3D b = obj.box3d;
      b.x += d.center_noise * nx;
      b.y += d.center_noise * ny;
      if (const auto g = ground_height_at(ctx.ground, b.x, b.y)) b.z -= *g;
      out.push_back({b, score, obj.class_id});
    }
    return out;
  };
}

FusionMLP load_or_init_mlp(const PipelineConfig& cfg) {
  std::vector<int> sizes{cfg.features.image_channels + 3};
  sizes.insert(sizes.end(), cfg.fusion.hidden.begin(), cfg.fusion.hidden.end());
  sizes.push_back(cfg.features.bev_channels);
  if (cfg.fusion.mlp_file.empty()) return FusionMLP::random(sizes, cfg.fusion.mlp_seed);
  FusionMLP mlp = read_mlp(cfg.fusion.mlp_file);
  if (mlp.sizes().front() != sizes.front() || mlp.sizes().back() != sizes.back()) {
    throw ConfigError("fusion MLP in " + cfg.fusion.mlp_file + " must map " + std::to_string(sizes.front()) +
                      " inputs to " + std::to_string(sizes.back()) + " outputs");
  }
  return mlp;
}

FrameResult run_frame(const Frame& frame, const PipelineConfig& cfg, const FusionMLP& mlp, const Detector& detector,
                      bool keep_stages, const StageOverrides& overrides) {
  const std::string& id = frame.frame_id;
  stage("validate", id, [&] {
    frame.validate();
    cfg.validate();
    mlp.validate();
    return 0;
  });
  const auto& grid = cfg.grid;
  const auto points = xyz_of(frame.points);

  FrameResult res;
  res.frame_id = id;
  res.lidar_points = points.size();

  const GroundHeightMap ground = stage("ground", id, [&] {
    if (overrides.ground) {
      if (!(overrides.ground->grid == grid)) throw ConfigError("imported ground map grid differs from the config grid");
      return *overrides.ground;
    }
    return estimate_ground_baseline(points, grid, cfg.ground);
  });

  const auto relative = stage("ground_relative", id, [&] { return make_ground_relative(points, ground, grid); });

  const BevTensor bev = stage("voxelize", id, [&] {
    if (overrides.bev) {
      if (!(overrides.bev->grid == grid)) throw ConfigError("imported BEV tensor grid differs from the config grid");
      return *overrides.bev;
    }
    return voxelize_trilinear(relative, grid);
  });

  const SparseDepthImage sparse = stage("sparse_depth", id, [&] { return build_sparse_depth_image(points, frame.calib); });
  res.sparse_pixels = static_cast<std::size_t>(std::count(sparse.occupied.begin(), sparse.occupied.end(), 1));

  const std::vector<Point3D> pseudo = stage("pseudo_points", id, [&] {
    std::vector<Point3D> out;
    if (!cfg.fusion.use_pseudo_points || !frame.dense_depth) return out;
    const auto cam = densify_pseudo_points(*frame.dense_depth, sparse.occupied, frame.calib, cfg.fusion.pseudo_stride);
    out.reserve(cam.size());
    for (const auto& p : cam) out.push_back(transform_to_lidar(p, frame.calib));
    return out;
  });
  res.pseudo_points = pseudo.size();

  const FeatureMap image = stage("image_features", id, [&] {
    const auto maps = stub_image_feature_maps(frame.points, frame.calib,
                                              frame.dense_depth ? &*frame.dense_depth : nullptr,
                                              cfg.features.image_channels);
    return aggregate_multiscale(maps);
  });

  const CorrespondenceMap corr = stage("correspondence", id, [&] {
    return build_correspondence_map(points, pseudo, frame.calib, grid,
                                    {image.rows(), image.cols(), image.stride},
                                    {cfg.fusion.radius, cfg.fusion.geometric});
  });
  res.matched_cells = corr.matched();

  const FeatureMap fused = stage("fusion", id, [&] {
    const FeatureMap bev_features = stub_bev_feature_map(bev, cfg.features.bev_channels);
    return continuous_fuse(bev_features, image, corr, mlp);
  });

  const DetectionSet raw = stage("detector", id, [&] {
    return detector(DetectorContext{frame, ground, bev, fused, cfg});
  });

  const DetectionSet restored = stage("restore_ground", id, [&] {
    std::vector<Box3D> boxes;
    for (const auto& d : raw) boxes.push_back(d.box);
    const auto r = restore_ground_height(boxes, ground, grid);
    DetectionSet out = raw;
    for (std::size_t i = 0; i < out.size(); ++i) out[i].box = r.boxes[i];
    return out;
  });

  res.detections = stage("nms", id, [&] { return oriented_nms(restored, cfg.nms); });
  for (const auto& d : res.detections) res.det_rects.push_back(image_rect_or_empty(d.box, frame.calib));

  stage("roi", id, [&] {
    const int n = cfg.roi_grid_n;
    const std::size_t per = static_cast<std::size_t>(fused.channels()) * n * n;
    res.roi_features.assign(per * res.detections.size(), 0.0f);
    res.roi_valid.assign(res.detections.size(), 0);
    for (std::size_t i = 0; i < res.detections.size(); ++i) {
      const auto& b = res.detections[i].box;
      if (!bev_cell_index(b.x, b.y, grid)) continue;
      const ROIFeature f = extract_oriented_roi(fused, OrientedROI{box3d_to_bev(b), n});
      for (std::size_t k = 0; k < per; ++k) res.roi_features[i * per + k] = static_cast<float>(f.values.data[k]);
      res.roi_valid[i] = 1;
    }
    return 0;
  });

  stage("refine_targets", id, [&] {
    for (const auto& d : res.detections) {
      int best = -1;
      double best_iou = 0.0;
      for (std::size_t g = 0; g < frame.labels.size(); ++g) {
        if (frame.labels[g].class_id != d.class_id) continue;
        const double iou = rotated_iou_bev(box3d_to_bev(d.box), box3d_to_bev(frame.labels[g].box3d));
        if (iou > best_iou) {
          best_iou = iou;
          best = static_cast<int>(g);
        }
      }
      res.refinement_match.push_back(best);
      res.refinement_targets.push_back(best >= 0 ? encode_refinement_offsets(d.box, frame.labels[best].box3d)
                                                 : RefinementOffsets{});
    }
    return 0;
  });

  res.loss = stage("loss", id, [&] {
    FrameLoss L;
    std::vector<Box3D> gt_rel;
    for (const auto& obj : frame.labels) {
      Box3D b = obj.box3d;
      if (const auto g = ground_height_at(ground, b.x, b.y)) b.z -= *g;
      gt_rel.push_back(b);
    }
    const auto targets = assign_targets(gt_rel, grid);
    const std::size_t cells = static_cast<std::size_t>(grid.nx) * grid.ny;
    std::vector<double> prob(cells, 1e-3);
    std::vector<BoxEncoding3D> pred(cells, BoxEncoding3D{});
    for (const auto& d : raw) {
      const auto bev_box = box3d_to_bev(d.box);
      for (int iy = 0; iy < grid.ny; ++iy) {
        for (int ix = 0; ix < grid.nx; ++ix) {
          const std::size_t k = static_cast<std::size_t>(iy) * grid.nx + ix;
          if (prob[k] > 0.5) continue;
          const Vec2 c = grid.cell_center(ix, iy);
          if (!bev_contains(bev_box, c.x, c.y)) continue;
          prob[k] = 1.0 - 1e-3;
          pred[k] = encode_box3d(d.box, c);
        }
      }
    }
    L.first_stage = first_stage_loss(prob, pred, targets, gt_rel, grid);
    std::size_t n2 = 0;
    std::size_t n3 = 0;
    for (std::size_t i = 0; i < res.detections.size(); ++i) {
      const int g = res.refinement_match[i];
      if (g < 0) continue;
      for (double v : res.refinement_targets[i]) L.r3d += smooth_l1(v);
      ++n3;
      const auto& rect = res.det_rects[i];
      const auto& gt_rect = frame.labels[g].box2d;
      if (rect.w > 0.0 && rect.h > 0.0 && gt_rect.w > 0.0 && gt_rect.h > 0.0) {
        const PixelCoord ref{gt_rect.x, gt_rect.y};
        L.r2d += box2d_regression_loss(encode_box2d(rect, ref), encode_box2d(gt_rect, ref));
        ++n2;
      }
    }
    if (n2) L.r2d /= static_cast<double>(n2);
    if (n3) L.r3d /= static_cast<double>(n3);
    // No depth predictor is in scope; the depth term is reported as zero.
    L.total = total_loss(L.first_stage.cls, L.first_stage.box, L.r2d, L.r3d, L.depth, cfg.loss);
    return L;
  });

  if (keep_stages) res.stages = FrameStages{ground, bev, sparse, image, fused};
  return res;
}

std::vector<EvalReportEntry> evaluate_results(std::span<const FrameResult> results, std::span<const Frame> frames,
                                              const PipelineConfig& cfg) {
  if (results.size() != frames.size()) throw ConfigError("evaluate_results: result and frame counts differ");
  std::vector<std::size_t> order(frames.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frames[a].frame_id < frames[b].frame_id; });
  std::vector<FrameInput> inputs;
  for (const std::size_t i : order) {
    if (results[i].frame_id != frames[i].frame_id) throw ConfigError("evaluate_results: frame order mismatch");
    inputs.push_back({results[i].detections, results[i].det_rects, frames[i].labels});
  }
  const int cls = cfg.eval.class_id;
  std::vector<EvalReportEntry> report;
  for (const auto overlap : cfg.eval.overlaps) {
    for (const double thr : cfg.eval.iou_thresholds) {
      for (const auto diff : cfg.eval.difficulties) {
        EvalConfig ec;
        ec.overlap = overlap;
        ec.difficulty = diff;
        ec.default_iou_threshold = thr;
        report.push_back({class_name_from_id(cls), cls, diff, overlap, thr, evaluate_class(inputs, ec, cls)});
      }
    }
  }
  return report;
}

PipelineResult run_pipeline(std::span<const Frame> frames, const PipelineConfig& cfg, const Detector& detector,
                            bool keep_stages) {
  cfg.validate();
  const FusionMLP mlp = stage("load_mlp", "-", [&] { return load_or_init_mlp(cfg); });
  std::vector<std::size_t> order(frames.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frames[a].frame_id < frames[b].frame_id; });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (frames[order[i]].frame_id == frames[order[i - 1]].frame_id) {
      throw ConfigError("duplicate frame id " + frames[order[i]].frame_id);
    }
  }
  std::vector<Frame> sorted;
  sorted.reserve(frames.size());
  for (const std::size_t i : order) sorted.push_back(frames[i]);

  PipelineResult out;
  out.frames.resize(sorted.size());
  std::vector<std::exception_ptr> errors(sorted.size());
  const auto n = static_cast<std::int64_t>(sorted.size());
#pragma omp parallel for schedule(dynamic, 1) if (n > 1)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      out.frames[i] = run_frame(sorted[i], cfg, mlp, detector, keep_stages);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  out.report = stage("eval", "*", [&] { return evaluate_results(out.frames, sorted, cfg); });
  return out;
}

std::vector<Frame> synth_frames(const PipelineConfig& cfg, std::uint64_t seed) {
  std::vector<Frame> frames;
  for (int i = 0; i < cfg.frames; ++i) {
    SceneSpec spec = cfg.scene;
    spec.seed = mix_seed(seed, static_cast<std::uint64_t>(i));
    spec.extent = cfg.grid;
    Frame f = synth_scene(spec);
    char id[16];
    std::snprintf(id, sizeof id, "%06d", i);
    f.frame_id = id;
    if (cfg.augment_enabled) f = augment_frame(f, mix_seed(spec.seed, 0xA5), cfg.augment);
    frames.push_back(std::move(f));
  }
  return frames;
}

void write_pipeline_outputs(const fs::path& dir, const PipelineResult& result, std::span<const Frame> frames,
                            const PipelineConfig& cfg) {
  nlohmann::ordered_json summary = nlohmann::ordered_json::array();
  for (const auto& r : result.frames) {
    const auto it = std::find_if(frames.begin(), frames.end(), [&](const Frame& f) { return f.frame_id == r.frame_id; });
    if (it == frames.end()) throw ConfigError("write_pipeline_outputs: unknown frame " + r.frame_id);
    std::vector<LabelRecord> labels;
    for (std::size_t i = 0; i < r.detections.size(); ++i) {
      const auto& d = r.detections[i];
      GroundTruthObject obj{d.box, r.det_rects[i], 0.0, 0, d.class_id};
      labels.push_back(object_to_label(obj, it->calib, d.score));
    }
    write_labels(dir / "detections" / (r.frame_id + ".txt"), labels);

    nlohmann::ordered_json s;
    s["frame_id"] = r.frame_id;
    s["lidar_points"] = r.lidar_points;
    s["pseudo_points"] = r.pseudo_points;
    s["sparse_pixels"] = r.sparse_pixels;
    s["matched_cells"] = r.matched_cells;
    s["detections"] = r.detections.size();
    s["loss"] = {{"cls", r.loss.first_stage.cls}, {"box", r.loss.first_stage.box},  {"r2d", r.loss.r2d},
                 {"r3d", r.loss.r3d},             {"depth", r.loss.depth},         {"total", r.loss.total},
                 {"positives", r.loss.first_stage.positives}, {"negatives", r.loss.first_stage.negatives}};
    auto targets = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < r.refinement_targets.size(); ++i) {
      targets.push_back({{"match", r.refinement_match[i]}, {"offsets", r.refinement_targets[i]}});
    }
    s["refinement_targets"] = std::move(targets);
    summary.push_back(std::move(s));

    if (r.stages) {
      const fs::path sd = dir / "stages" / r.frame_id;
      write_ground_map(sd / "ground.bin", r.stages->ground);
      write_bev_tensor(sd / "bev.bin", r.stages->bev);
      const auto& sp = r.stages->sparse_depth.values;
      write_raw_grid(sd / "sparse_depth.bin", sp.data, {sp.channels, sp.rows, sp.cols}, "channel,row,col",
                     {{"channels", {"dx", "dy", "z_cam/10"}}});
      write_feature_map(sd / "image_features.bin", r.stages->image_features);
      write_feature_map(sd / "fused_bev.bin", r.stages->fused_bev);
      const int n = cfg.roi_grid_n;
      write_raw_grid(sd / "roi.bin", r.roi_features,
                     {static_cast<int>(r.detections.size()), r.stages->fused_bev.channels(), n, n},
                     "detection,channel,a,b", {{"valid", r.roi_valid}});
    }
  }
  write_file_text(dir / "report.json", report_to_json(result.report));
  write_file_text(dir / "report.txt", report_to_table(result.report));
  write_file_text(dir / "summary.json", summary.dump(2) + "\n");
  write_file_text(dir / "config.json", config_to_json(cfg).dump(2) + "\n");
}

}  // namespace mmf
