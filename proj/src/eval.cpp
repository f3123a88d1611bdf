#include "mmf/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <tuple>

#include <json.hpp>

#include "mmf/errors.hpp"

namespace mmf {

const char* to_string(Difficulty d) {
  switch (d) {
    case Difficulty::kEasy: return "easy";
    case Difficulty::kModerate: return "moderate";
    case Difficulty::kHard: return "hard";
  }
  return "?";
}

const char* to_string(OverlapKind k) {
  switch (k) {
    case OverlapKind::k2D: return "2d";
    case OverlapKind::kBEV: return "bev";
    case OverlapKind::k3D: return "3d";
  }
  return "?";
}

DifficultyLimits difficulty_limits(Difficulty d) {
  switch (d) {
    case Difficulty::kEasy: return {40.0, 0, 0.15};
    case Difficulty::kModerate: return {25.0, 1, 0.30};
    case Difficulty::kHard: return {25.0, 2, 0.50};
  }
  return {25.0, 2, 0.50};
}

GtStatus difficulty_filter(const GroundTruthObject& gt, Difficulty level) {
  const auto lim = difficulty_limits(level);
  const bool ok = gt.box2d.h >= lim.min_height_px && gt.occlusion <= lim.max_occlusion &&
                  gt.truncation <= lim.max_truncation;
  return ok ? GtStatus::kCounted : GtStatus::kIgnored;
}

double EvalConfig::threshold_for(int class_id) const {
  const auto it = iou_threshold.find(class_id);
  return it == iou_threshold.end() ? default_iou_threshold : it->second;
}

double overlap(OverlapKind kind, const Detection& det, const Box2D& det_rect, const GroundTruthObject& gt) {
  switch (kind) {
    case OverlapKind::k2D: return iou_2d(det_rect, gt.box2d);
    case OverlapKind::kBEV: return rotated_iou_bev(box3d_to_bev(det.box), box3d_to_bev(gt.box3d));
    case OverlapKind::k3D: return iou_3d(det.box, gt.box3d);
  }
  return 0.0;
}

FrameMatch match_detections(const FrameInput& frame, const EvalConfig& cfg, int class_id) {
  if (cfg.overlap == OverlapKind::k2D && frame.det_rects.size() != frame.detections.size()) {
    throw ConfigError("match_detections: 2D overlap needs one image rectangle per detection");
  }
  const double thr = cfg.threshold_for(class_id);
  FrameMatch out;
  out.flags.assign(frame.detections.size(), MatchFlag::kFP);

  std::vector<std::size_t> gts;
  std::vector<GtStatus> status;
  for (std::size_t g = 0; g < frame.ground_truth.size(); ++g) {
    if (frame.ground_truth[g].class_id != class_id) continue;
    gts.push_back(g);
    status.push_back(difficulty_filter(frame.ground_truth[g], cfg.difficulty));
    if (status.back() == GtStatus::kCounted) ++out.counted_gt;
  }

  std::vector<std::size_t> order;
  for (std::size_t d = 0; d < frame.detections.size(); ++d) {
    if (frame.detections[d].class_id == class_id) order.push_back(d);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return frame.detections[a].score > frame.detections[b].score;
  });

  const Box2D no_rect{};
  std::vector<unsigned char> taken(gts.size(), 0);
  for (const std::size_t d : order) {
    const auto& det = frame.detections[d];
    const Box2D& rect = frame.det_rects.empty() ? no_rect : frame.det_rects[d];
    double best = -1.0;
    std::size_t best_k = gts.size();
    bool hits_ignored = false;
    for (std::size_t k = 0; k < gts.size(); ++k) {
      const double iou = overlap(cfg.overlap, det, rect, frame.ground_truth[gts[k]]);
      if (iou < thr) continue;
      if (status[k] == GtStatus::kIgnored) {
        hits_ignored = true;
      } else if (!taken[k] && iou > best) {
        best = iou;
        best_k = k;
      }
    }
    if (best_k < gts.size()) {
      taken[best_k] = 1;
      out.flags[d] = MatchFlag::kTP;
    } else if (hits_ignored) {
      out.flags[d] = MatchFlag::kIgnored;
    }
  }
  return out;
}

APResult ap_11point(std::span<const ScoredFlag> flags, std::size_t total_counted_gt) {
  APResult res;
  if (total_counted_gt == 0) {
    res.no_ground_truth = true;
    return res;
  }
  std::vector<std::size_t> order(flags.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return flags[a].score > flags[b].score; });
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (const std::size_t i : order) {
    const auto f = flags[i].flag;
    if (f == MatchFlag::kIgnored) continue;
    (f == MatchFlag::kTP ? tp : fp) += 1;
    res.curve.push_back({static_cast<double>(tp) / static_cast<double>(total_counted_gt),
                         static_cast<double>(tp) / static_cast<double>(tp + fp)});
  }
  // Suffix maximum of precision gives the interpolated envelope.
  std::vector<double> envelope(res.curve.size());
  double run = 0.0;
  for (std::size_t k = res.curve.size(); k-- > 0;) {
    run = std::max(run, res.curve[k].precision);
    envelope[k] = run;
  }
  double sum = 0.0;
  for (int s = 0; s <= 10; ++s) {
    const double r = s / 10.0;
    // First curve point with recall >= r; recall is non-decreasing along the curve.
    const auto it = std::lower_bound(res.curve.begin(), res.curve.end(), r,
                                     [](const PRPoint& p, double v) { return p.recall < v; });
    const double p = it == res.curve.end() ? 0.0 : envelope[static_cast<std::size_t>(it - res.curve.begin())];
    res.interpolated[s] = p;
    sum += p;
  }
  res.ap = sum / 11.0;
  return res;
}

APResult evaluate_class(std::span<const FrameInput> frames, const EvalConfig& cfg, int class_id) {
  std::vector<ScoredFlag> all;
  std::size_t counted = 0;
  for (const auto& f : frames) {
    const auto m = match_detections(f, cfg, class_id);
    counted += m.counted_gt;
    // Keep the frame-internal detection order; the sweep sort is stable.
    for (std::size_t d = 0; d < f.detections.size(); ++d) {
      if (f.detections[d].class_id == class_id) all.push_back({f.detections[d].score, m.flags[d]});
    }
  }
  return ap_11point(all, counted);
}

std::string report_to_json(std::span<const EvalReportEntry> entries) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["class"] = e.class_name;
    j["difficulty"] = to_string(e.difficulty);
    j["overlap_kind"] = to_string(e.overlap);
    j["iou_threshold"] = e.iou_threshold;
    j["AP"] = e.result.ap;
    j["no_ground_truth"] = e.result.no_ground_truth;
    auto pts = nlohmann::ordered_json::array();
    for (const auto& p : e.result.curve) pts.push_back({p.recall, p.precision});
    j["pr_points"] = std::move(pts);
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

std::string report_to_table(std::span<const EvalReportEntry> entries) {
  using Key = std::tuple<std::string, int, double>;
  std::vector<Key> rows;
  std::map<Key, std::array<const EvalReportEntry*, 3>> cells;
  for (const auto& e : entries) {
    const Key k{e.class_name, static_cast<int>(e.overlap), e.iou_threshold};
    if (!cells.count(k)) {
      rows.push_back(k);
      cells[k] = {nullptr, nullptr, nullptr};
    }
    cells[k][static_cast<int>(e.difficulty)] = &e;
  }
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %-6s %-5s %9s %9s %9s\n", "Class", "Metric", "IoU", "Easy", "Moderate", "Hard");
  out += line;
  for (const auto& k : rows) {
    const auto& c = cells[k];
    auto cell = [](const EvalReportEntry* e) {
      char buf[16];
      if (!e) return std::string("        -");
      std::snprintf(buf, sizeof buf, "%9.2f", 100.0 * e->result.ap);
      return std::string(buf);
    };
    std::snprintf(line, sizeof line, "%-12s %-6s %-5.2f %s %s %s\n", std::get<0>(k).c_str(),
                  to_string(static_cast<OverlapKind>(std::get<1>(k))), std::get<2>(k), cell(c[0]).c_str(),
                  cell(c[1]).c_str(), cell(c[2]).c_str());
    out += line;
  }
  return out;
}

}  // namespace mmf
