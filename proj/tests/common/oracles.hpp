#pragma once

// Brute-force reference implementations shared by the unit and acceptance
// tests. They avoid the library's own helpers on purpose.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "talforge/rng.hpp"
#include "talforge/tensor.hpp"
#include "talforge/types.hpp"

namespace talforge::oracle {

/// Direct linear interpolation of row `pos` (clamped) from a [T x E] matrix.
inline std::vector<double> interp_row(const Tensor& m, double pos) {
  const std::size_t t = m.dim(0), e = m.dim(1);
  pos = std::min(std::max(pos, 0.0), static_cast<double>(t - 1));
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, t - 1);
  const double frac = pos - static_cast<double>(lo);
  std::vector<double> out(e);
  for (std::size_t j = 0; j < e; ++j) out[j] = (1.0 - frac) * m.at(lo, j) + frac * m.at(hi, j);
  return out;
}

inline double overlap_ratio(double s1, double e1, double s2, double e2) {
  const double lo = s1 > s2 ? s1 : s2;
  const double hi = e1 < e2 ? e1 : e2;
  const double inter = hi > lo ? hi - lo : 0.0;
  return inter / ((e1 - s1) + (e2 - s2) - inter);
}

/// AP for one class: quadratic greedy matching, then for every true positive
/// the best precision at any rank at or below it, averaged over ground truth.
inline double naive_ap(const std::vector<Detection>& dets, const std::vector<std::pair<std::string, Segment>>& gts,
                       double thr) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < dets.size(); ++i) order.push_back(i);
  // insertion sort: higher score first, earlier index first on ties
  for (std::size_t i = 1; i < order.size(); ++i) {
    for (std::size_t j = i; j > 0 && dets[order[j]].score > dets[order[j - 1]].score; --j) {
      std::swap(order[j], order[j - 1]);
    }
  }
  std::vector<bool> used(gts.size(), false);
  std::vector<bool> is_tp;
  for (std::size_t idx : order) {
    const auto& d = dets[idx];
    int best = -1;
    double best_ov = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].first != d.video_id) continue;
      const double ov = overlap_ratio(d.proposal.t_start, d.proposal.t_end, gts[g].second.start, gts[g].second.end);
      if (ov >= thr && ov > best_ov) {
        best_ov = ov;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) used[static_cast<std::size_t>(best)] = true;
    is_tp.push_back(best >= 0);
  }
  std::vector<double> precision;
  double tp = 0.0;
  for (std::size_t k = 0; k < is_tp.size(); ++k) {
    tp += is_tp[k] ? 1.0 : 0.0;
    precision.push_back(tp / static_cast<double>(k + 1));
  }
  double ap = 0.0;
  for (std::size_t k = 0; k < is_tp.size(); ++k) {
    if (!is_tp[k]) continue;
    double best = 0.0;
    for (std::size_t j = k; j < precision.size(); ++j) best = std::max(best, precision[j]);
    ap += best;
  }
  return ap / static_cast<double>(gts.size());
}

/// Mean over thresholds of the mean AP over classes that have ground truth.
inline std::map<double, double> naive_map(const std::vector<Detection>& dets, const AnnotationSet& gts,
                                          const std::vector<double>& thresholds) {
  std::map<std::string, std::vector<std::pair<std::string, Segment>>> by_class;
  for (const auto& [video, ann] : gts.videos) {
    for (const auto& inst : ann.instances) by_class[inst.label].push_back({video, inst.segment});
  }
  std::map<double, double> out;
  for (double thr : thresholds) {
    double total = 0.0;
    for (const auto& [label, list] : by_class) {
      std::vector<Detection> mine;
      for (const auto& d : dets) {
        if (d.label == label && gts.videos.count(d.video_id)) mine.push_back(d);
      }
      total += naive_ap(mine, list, thr);
    }
    out[thr] = total / static_cast<double>(by_class.size());
  }
  return out;
}

struct EvalInstance {
  AnnotationSet gts;
  std::vector<Detection> detections;
};

/// Up to 5 videos, 3 classes, 5 ground-truth segments and 10 detections.
/// Some detections are jittered copies of ground truth so that matches
/// happen at every threshold; scores are quantised to produce ties.
inline EvalInstance random_eval_instance(std::uint64_t seed) {
  Rng rng(seed);
  const std::vector<std::string> classes{"a", "b", "c"};
  const auto n_videos = static_cast<std::size_t>(rng.uniform_int(1, 5));
  const auto n_gt = static_cast<std::size_t>(rng.uniform_int(1, 5));
  const auto n_det = static_cast<std::size_t>(rng.uniform_int(0, 10));
  EvalInstance inst;
  for (std::size_t v = 0; v < n_videos; ++v) inst.gts.videos["v" + std::to_string(v)] = {50.0, "validation", {}};
  std::vector<std::pair<std::string, GroundTruth>> all;
  for (std::size_t g = 0; g < n_gt; ++g) {
    const std::string video = "v" + std::to_string(rng.uniform_int(0, static_cast<std::int64_t>(n_videos) - 1));
    const double s = rng.uniform(0.0, 40.0);
    GroundTruth gt{classes[static_cast<std::size_t>(rng.uniform_int(0, 2))], {s, s + rng.uniform(1.0, 10.0)}};
    inst.gts.videos[video].instances.push_back(gt);
    all.push_back({video, gt});
  }
  for (std::size_t d = 0; d < n_det; ++d) {
    Detection det;
    det.score = std::round(rng.uniform() * 8.0) / 8.0;
    if (rng.uniform() < 0.6) {
      const auto& [video, gt] = all[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(all.size()) - 1))];
      const double len = gt.segment.length();
      const double s = gt.segment.start + rng.uniform(-0.3, 0.3) * len;
      det.video_id = video;
      det.label = rng.uniform() < 0.8 ? gt.label : classes[static_cast<std::size_t>(rng.uniform_int(0, 2))];
      det.proposal = {s, std::max(s + 0.5, gt.segment.end + rng.uniform(-0.3, 0.3) * len), det.score, ""};
    } else {
      det.video_id = "v" + std::to_string(rng.uniform_int(0, static_cast<std::int64_t>(n_videos) - 1));
      det.label = classes[static_cast<std::size_t>(rng.uniform_int(0, 2))];
      const double s = rng.uniform(0.0, 45.0);
      det.proposal = {s, s + rng.uniform(0.5, 5.0), det.score, ""};
    }
    inst.detections.push_back(det);
  }
  return inst;
}

}  // namespace talforge::oracle
