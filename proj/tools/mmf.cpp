// mmf: command-line front end. Exit codes: 0 success, 1 validation failure, 2 I/O or parse error.

#include <omp.h>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mmf/checks.hpp"
#include "mmf/config.hpp"
#include "mmf/errors.hpp"
#include "mmf/features.hpp"
#include "mmf/pipeline.hpp"
#include "mmf/synth.hpp"

namespace {

using namespace mmf;

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kIoParse = 2;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::string out = ".";
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON config file (flags override it)");
  sub->add_option("--seed", c.seed, "random seed");
  sub->add_option("--threads", c.threads, "worker threads (0 = OpenMP default)")->check(CLI::NonNegativeNumber);
  sub->add_option("--out", c.out, "output directory");
}

PipelineConfig resolve(const Common& c) {
  PipelineConfig cfg = c.config.empty() ? PipelineConfig{} : load_config(c.config);
  if (c.threads > 0) cfg.threads = c.threads;
  if (c.seed) cfg.scene.seed = *c.seed;
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
  return cfg;
}

std::uint64_t seed_of(const Common& c, const PipelineConfig& cfg) { return c.seed ? *c.seed : cfg.scene.seed; }

std::string first_frame(const std::string& dir) {
  const auto ids = list_frames(dir);
  if (ids.empty()) throw IoError("no frames under " + dir);
  return ids.front();
}

int report_checks(const std::vector<checks::CheckResult>& results) {
  bool ok = true;
  for (const auto& r : results) {
    std::printf("%s\n", checks::format_result(r).c_str());
    ok = ok && r.passed;
  }
  std::printf("%s\n", ok ? "all checks passed" : "some checks FAILED");
  return ok ? kOk : kValidation;
}

int classify(const std::exception_ptr& p) {
  try {
    std::rethrow_exception(p);
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    try {
      std::rethrow_exception(e.cause());
    } catch (const ParseError&) {
      return kIoParse;
    } catch (const IoError&) {
      return kIoParse;
    } catch (...) {
      return kValidation;
    }
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kIoParse;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIoParse;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIoParse;
  } catch (const std::exception& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kValidation;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-sensor 3D detection geometry, fusion and evaluation toolkit"};
  app.require_subcommand(1);
  std::function<int()> action;

  // voxelize
  Common vox_c;
  std::string vox_points, vox_ground;
  auto* vox = app.add_subcommand("voxelize", "trilinear BEV occupancy volume from a point cloud");
  add_common(vox, vox_c);
  vox->add_option("--points", vox_points, "velodyne .bin point cloud")->required();
  vox->add_option("--ground", vox_ground, "ground map (raw grid) to make heights ground-relative");
  vox->callback([&] {
    action = [&] {
      const auto cfg = resolve(vox_c);
      auto pts = xyz_of(read_point_cloud(vox_points));
      if (!vox_ground.empty()) pts = make_ground_relative(pts, read_ground_map(vox_ground), cfg.grid);
      const auto t = voxelize_trilinear(pts, cfg.grid);
      write_bev_tensor(fs::path(vox_c.out) / "bev.bin", t);
      double mass = 0.0;
      for (float v : t.values.data) mass += v;
      std::printf("voxelized %zu points into %dx%dx%d, mass %.6f\n", pts.size(), t.grid.nz, t.grid.ny, t.grid.nx, mass);
      return kOk;
    };
  });

  // ground
  Common gr_c;
  std::string gr_points;
  auto* gr = app.add_subcommand("ground", "baseline ground height map");
  add_common(gr, gr_c);
  gr->add_option("--points", gr_points, "velodyne .bin point cloud")->required();
  gr->callback([&] {
    action = [&] {
      const auto cfg = resolve(gr_c);
      const auto g = estimate_ground_baseline(xyz_of(read_point_cloud(gr_points)), cfg.grid, cfg.ground);
      write_ground_map(fs::path(gr_c.out) / "ground.bin", g);
      std::size_t valid = 0;
      for (auto v : g.valid) valid += v;
      std::printf("ground map %dx%d, %zu cells observed\n", g.rows(), g.cols(), valid);
      return kOk;
    };
  });

  // depth-image
  Common di_c;
  std::string di_points, di_calib;
  auto* di = app.add_subcommand("depth-image", "sparse 3-channel depth image from LiDAR");
  add_common(di, di_c);
  di->add_option("--points", di_points, "velodyne .bin point cloud")->required();
  di->add_option("--calib", di_calib, "calibration text file")->required();
  di->callback([&] {
    action = [&] {
      resolve(di_c);
      const auto calib = read_calibration(di_calib);
      const auto img = build_sparse_depth_image(xyz_of(read_point_cloud(di_points)), calib);
      const auto& v = img.values;
      write_raw_grid(fs::path(di_c.out) / "sparse_depth.bin", v.data, {v.channels, v.rows, v.cols}, "channel,row,col",
                     {{"channels", {"dx", "dy", "z_cam/10"}}});
      std::size_t occ = 0;
      for (auto o : img.occupied) occ += o;
      std::printf("sparse depth %dx%d, %zu occupied pixels\n", v.rows, v.cols, occ);
      return kOk;
    };
  });

  // fuse
  Common fu_c;
  std::string fu_input, fu_id;
  auto* fu = app.add_subcommand("fuse", "correspondences and continuous fusion for one frame");
  add_common(fu, fu_c);
  fu->add_option("--input", fu_input, "frame directory")->required();
  fu->add_option("--id", fu_id, "frame id (default: first)");
  fu->callback([&] {
    action = [&] {
      const auto cfg = resolve(fu_c);
      const Frame f = read_frame(fu_input, fu_id.empty() ? first_frame(fu_input) : fu_id);
      const Detector none = [](const DetectorContext&) { return DetectionSet{}; };
      const auto r = run_frame(f, cfg, load_or_init_mlp(cfg), none, true);
      const fs::path out(fu_c.out);
      write_feature_map(out / "image_features.bin", r.stages->image_features);
      write_feature_map(out / "fused_bev.bin", r.stages->fused_bev);
      std::printf("frame %s: %zu lidar points, %zu pseudo points, %zu matched BEV cells\n", f.frame_id.c_str(),
                  r.lidar_points, r.pseudo_points, r.matched_cells);
      return kOk;
    };
  });

  // roi
  Common roi_c;
  std::string roi_map, roi_boxes, roi_calib;
  int roi_n = 0;
  auto* roi = app.add_subcommand("roi", "oriented ROI features of boxes on a BEV feature map");
  add_common(roi, roi_c);
  roi->add_option("--bev", roi_map, "BEV feature map (raw grid)")->required();
  roi->add_option("--boxes", roi_boxes, "label file with the boxes")->required();
  roi->add_option("--calib", roi_calib, "calibration text file")->required();
  roi->add_option("--grid-n", roi_n, "lattice size (default from config)");
  roi->callback([&] {
    action = [&] {
      const auto cfg = resolve(roi_c);
      const int n = roi_n > 0 ? roi_n : cfg.roi_grid_n;
      const auto map = read_feature_map(roi_map);
      const auto calib = read_calibration(roi_calib);
      const auto labels = read_labels(roi_boxes);
      std::vector<float> values;
      nlohmann::ordered_json anchors = nlohmann::ordered_json::array();
      for (const auto& l : labels) {
        const auto obj = label_to_object(l, calib);
        const OrientedROI r{box3d_to_bev(obj.box3d), n};
        const auto f = extract_oriented_roi(map, r);
        for (double v : f.values.data) values.push_back(static_cast<float>(v));
        const auto a = r.anchor();
        anchors.push_back({{"anchor", a.anchor == OrientationAnchor::kA0 ? 0 : 90}, {"residual", a.residual}});
      }
      write_raw_grid(fs::path(roi_c.out) / "roi.bin", values,
                     {static_cast<int>(labels.size()), map.channels(), n, n}, "box,channel,a,b", {{"anchors", anchors}});
      std::printf("extracted %zu ROIs of %dx%dx%d\n", labels.size(), map.channels(), n, n);
      return kOk;
    };
  });

  // nms
  Common nms_c;
  std::string nms_dets, nms_calib;
  std::optional<double> nms_score, nms_iou;
  auto* nms = app.add_subcommand("nms", "score threshold and oriented NMS on a scored label file");
  add_common(nms, nms_c);
  nms->add_option("--detections", nms_dets, "label file with scores")->required();
  nms->add_option("--calib", nms_calib, "calibration text file")->required();
  nms->add_option("--score-threshold", nms_score, "minimum score");
  nms->add_option("--iou-threshold", nms_iou, "suppression IoU");
  nms->callback([&] {
    action = [&] {
      auto cfg = resolve(nms_c);
      if (nms_score) cfg.nms.score_threshold = *nms_score;
      if (nms_iou) cfg.nms.iou_threshold = *nms_iou;
      const auto calib = read_calibration(nms_calib);
      const auto labels = read_labels(nms_dets);
      DetectionSet dets;
      std::vector<LabelRecord> source;
      for (const auto& l : labels) dets.push_back(label_to_detection(l, calib));
      const auto kept = oriented_nms(dets, cfg.nms);
      // Emit the surviving input rows verbatim.
      std::vector<bool> used(labels.size(), false);
      std::vector<LabelRecord> out;
      for (const auto& k : kept) {
        for (std::size_t i = 0; i < dets.size(); ++i) {
          if (!used[i] && dets[i] == k) {
            used[i] = true;
            out.push_back(labels[i]);
            break;
          }
        }
      }
      write_labels(fs::path(nms_c.out) / "detections.txt", out);
      std::printf("kept %zu of %zu detections\n", out.size(), labels.size());
      return kOk;
    };
  });

  // eval
  Common ev_c;
  std::string ev_gt, ev_det;
  auto* ev = app.add_subcommand("eval", "11-point AP of detection files against labelled frames");
  add_common(ev, ev_c);
  ev->add_option("--gt", ev_gt, "frame directory with label_2/ and calib/")->required();
  ev->add_option("--det", ev_det, "directory of <id>.txt detection files")->required();
  ev->callback([&] {
    action = [&] {
      const auto cfg = resolve(ev_c);
      std::vector<FrameResult> results;
      std::vector<Frame> frames;
      for (const auto& id : list_frames(ev_gt)) {
        Frame f;
        f.frame_id = id;
        f.calib = read_calibration(fs::path(ev_gt) / "calib" / (id + ".txt"));
        for (const auto& l : read_labels(fs::path(ev_gt) / "label_2" / (id + ".txt"))) {
          f.labels.push_back(label_to_object(l, f.calib));
        }
        FrameResult r;
        r.frame_id = id;
        const fs::path det_path = fs::path(ev_det) / (id + ".txt");
        if (fs::exists(det_path)) {
          for (const auto& l : read_labels(det_path)) {
            r.detections.push_back(label_to_detection(l, f.calib));
            r.det_rects.push_back(Box2D::from_ltrb(l.bbox[0], l.bbox[1], l.bbox[2], l.bbox[3]));
          }
        }
        frames.push_back(std::move(f));
        results.push_back(std::move(r));
      }
      const auto report = evaluate_results(results, frames, cfg);
      write_file_text(fs::path(ev_c.out) / "report.json", report_to_json(report));
      const auto table = report_to_table(report);
      write_file_text(fs::path(ev_c.out) / "report.txt", table);
      std::printf("%s", table.c_str());
      return kOk;
    };
  });

  // synth
  Common sy_c;
  std::optional<int> sy_frames;
  auto* sy = app.add_subcommand("synth", "write synthetic frames");
  add_common(sy, sy_c);
  sy->add_option("--frames", sy_frames, "number of frames (default from config)");
  sy->callback([&] {
    action = [&] {
      auto cfg = resolve(sy_c);
      if (sy_frames) cfg.frames = *sy_frames;
      cfg.validate();
      const auto frames = synth_frames(cfg, seed_of(sy_c, cfg));
      for (const auto& f : frames) write_frame(sy_c.out, f);
      std::printf("wrote %zu frames to %s\n", frames.size(), sy_c.out.c_str());
      return kOk;
    };
  });

  // augment
  Common au_c;
  std::string au_input;
  auto* au = app.add_subcommand("augment", "random similarity transform of every frame in a directory");
  add_common(au, au_c);
  au->add_option("--input", au_input, "frame directory")->required();
  au->callback([&] {
    action = [&] {
      const auto cfg = resolve(au_c);
      const std::uint64_t seed = seed_of(au_c, cfg);
      std::size_t n = 0;
      for (const auto& id : list_frames(au_input)) {
        const Frame f = read_frame(au_input, id);
        write_frame(au_c.out, augment_frame(f, mix_seed(seed, n), cfg.augment));
        ++n;
      }
      std::printf("augmented %zu frames\n", n);
      return kOk;
    };
  });

  // pipeline
  Common pl_c;
  std::string pl_input;
  std::optional<int> pl_frames;
  std::optional<double> pl_noise;
  bool pl_stages = false;
  auto* pl = app.add_subcommand("pipeline", "end-to-end run with the oracle detector");
  add_common(pl, pl_c);
  pl->add_option("--input", pl_input, "frame directory (default: synthesize from --seed)");
  pl->add_option("--frames", pl_frames, "synthetic frame count");
  pl->add_option("--noise", pl_noise, "oracle detector center noise sigma (m)");
  pl->add_flag("--export-stages", pl_stages, "also write per-stage grids");
  pl->callback([&] {
    action = [&] {
      auto cfg = resolve(pl_c);
      if (pl_frames) cfg.frames = *pl_frames;
      if (pl_noise) cfg.detector.center_noise = *pl_noise;
      cfg.validate();
      const std::uint64_t seed = seed_of(pl_c, cfg);
      std::vector<Frame> frames;
      if (pl_input.empty()) {
        frames = synth_frames(cfg, seed);
      } else {
        for (const auto& id : list_frames(pl_input)) frames.push_back(read_frame(pl_input, id));
      }
      const auto result = run_pipeline(frames, cfg, make_oracle_detector(seed), pl_stages);
      write_pipeline_outputs(pl_c.out, result, frames, cfg);
      std::printf("%s", report_to_table(result.report).c_str());
      return kOk;
    };
  });

  // gradcheck
  Common gc_c;
  int gc_configs = 50;
  auto* gc = app.add_subcommand("gradcheck", "analytic vs finite-difference gradients");
  add_common(gc, gc_c);
  gc->add_option("--configs", gc_configs, "random configurations per check")->check(CLI::PositiveNumber);
  gc->callback([&] {
    action = [&] {
      const auto cfg = resolve(gc_c);
      const std::uint64_t seed = seed_of(gc_c, cfg);
      return report_checks({checks::check_roi_gradients(gc_configs, mix_seed(seed, 3)),
                            checks::check_mlp_gradients(gc_configs, mix_seed(seed, 4))});
    };
  });

  // oracle-check
  Common oc_c;
  double oc_scale = 1.0;
  auto* oc = app.add_subcommand("oracle-check", "run every brute-force oracle and print a pass/fail table");
  add_common(oc, oc_c);
  oc->add_option("--scale", oc_scale, "fraction of the full case counts")->check(CLI::Range(1e-3, 1.0));
  oc->callback([&] {
    action = [&] {
      const auto cfg = resolve(oc_c);
      return report_checks(checks::run_oracle_suite(seed_of(oc_c, cfg), oc_scale));
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kIoParse;
  }
  try {
    return action ? action() : kValidation;
  } catch (...) {
    return classify(std::current_exception());
  }
}
