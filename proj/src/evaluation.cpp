#include "talforge/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace talforge {

double iou(const Segment& a, const Segment& b) {
  if (!(a.start < a.end) || !(b.start < b.end)) throw std::invalid_argument("iou: degenerate segment");
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = a.length() + b.length() - inter;
  return inter / uni;
}

std::vector<double> EvalConfig::default_thresholds() {
  return {0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95};
}

void EvalConfig::validate() const {
  if (iou_thresholds.empty()) throw std::invalid_argument("eval: iou_thresholds must be nonempty");
  for (std::size_t i = 0; i < iou_thresholds.size(); ++i) {
    const double t = iou_thresholds[i];
    if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("eval: IoU thresholds must lie in (0, 1]");
    if (i > 0 && !(t > iou_thresholds[i - 1])) throw std::invalid_argument("eval: IoU thresholds must be strictly increasing");
  }
}

namespace {

double interpolated_area(const std::vector<double>& recall, const std::vector<double>& precision) {
  std::vector<double> mrec{0.0};
  std::vector<double> mprec{0.0};
  mrec.insert(mrec.end(), recall.begin(), recall.end());
  mprec.insert(mprec.end(), precision.begin(), precision.end());
  mrec.push_back(1.0);
  mprec.push_back(0.0);
  for (std::size_t i = mprec.size() - 1; i-- > 0;) mprec[i] = std::max(mprec[i], mprec[i + 1]);
  double area = 0.0;
  for (std::size_t i = 1; i < mrec.size(); ++i) {
    if (mrec[i] != mrec[i - 1]) area += (mrec[i] - mrec[i - 1]) * mprec[i];
  }
  return area;
}

std::vector<std::size_t> rank_by_score(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

std::optional<ApResult> average_precision(const std::vector<Detection>& detections, const ClassGroundTruth& gts,
                                          double iou_thr) {
  std::size_t positives = 0;
  std::map<std::string, std::vector<bool>> taken;
  for (const auto& [video, segs] : gts) {
    positives += segs.size();
    taken[video].assign(segs.size(), false);
  }
  if (positives == 0) return std::nullopt;

  std::vector<double> scores;
  scores.reserve(detections.size());
  for (const auto& d : detections) scores.push_back(d.score);

  ApResult result;
  double tp = 0.0, fp = 0.0;
  for (std::size_t idx : rank_by_score(scores)) {
    const auto& det = detections[idx];
    const auto it = gts.find(det.video_id);
    std::ptrdiff_t best = -1;
    double best_iou = -1.0;
    if (it != gts.end()) {
      const auto& segs = it->second;
      auto& used = taken[det.video_id];
      for (std::size_t g = 0; g < segs.size(); ++g) {
        if (used[g]) continue;
        const double overlap = iou(det.proposal.segment(), segs[g]);
        if (overlap >= iou_thr && overlap > best_iou) {
          best_iou = overlap;
          best = static_cast<std::ptrdiff_t>(g);
        }
      }
      if (best >= 0) used[static_cast<std::size_t>(best)] = true;
    }
    (best >= 0 ? tp : fp) += 1.0;
    result.curve.recall.push_back(tp / static_cast<double>(positives));
    result.curve.precision.push_back(tp / (tp + fp));
  }
  result.ap = interpolated_area(result.curve.recall, result.curve.precision);
  return result;
}

MapReport mean_map(const std::vector<Detection>& detections, const AnnotationSet& gts, const EvalConfig& cfg) {
  cfg.validate();
  std::map<std::string, ClassGroundTruth> by_class;
  for (const auto& [video, ann] : gts.videos) {
    for (const auto& inst : ann.instances) by_class[inst.label][video].push_back(inst.segment);
  }
  if (by_class.empty()) throw std::invalid_argument("mean_map: ground truth contains no instances");

  std::map<std::string, std::vector<Detection>> dets_by_class;
  for (const auto& d : detections) {
    if (by_class.count(d.label) && gts.videos.count(d.video_id)) dets_by_class[d.label].push_back(d);
  }

  MapReport report;
  for (double thr : cfg.iou_thresholds) {
    double total = 0.0;
    for (const auto& [label, class_gts] : by_class) {
      auto ap = average_precision(dets_by_class[label], class_gts, thr);
      report.per_class[label][thr] = ap->ap;
      report.curves[label][thr] = std::move(ap->curve);
      total += ap->ap;
    }
    report.per_threshold[thr] = total / static_cast<double>(by_class.size());
  }
  double sum_map = 0.0;
  for (const auto& [thr, m] : report.per_threshold) sum_map += m;
  report.average_map = sum_map / static_cast<double>(report.per_threshold.size());
  return report;
}

double average_recall_at_k(const ProposalSet& proposals, const AnnotationSet& gts, std::size_t k, double iou_thr) {
  if (k == 0) throw std::invalid_argument("average_recall_at_k: k must be >= 1");
  std::size_t total = 0, hit = 0;
  for (const auto& [video, ann] : gts.videos) {
    total += ann.instances.size();
    const auto it = proposals.find(video);
    if (it == proposals.end() || ann.instances.empty()) continue;
    std::vector<double> scores;
    for (const auto& p : it->second) scores.push_back(p.score);
    auto order = rank_by_score(scores);
    order.resize(std::min(order.size(), k));
    for (const auto& inst : ann.instances) {
      for (std::size_t idx : order) {
        if (iou(it->second[idx].segment(), inst.segment) >= iou_thr) {
          ++hit;
          break;
        }
      }
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

double mean_best_iou(const ProposalSet& proposals, const AnnotationSet& gts) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& [video, list] : proposals) {
    const auto it = gts.videos.find(video);
    for (const auto& p : list) {
      double best = 0.0;
      if (it != gts.videos.end()) {
        for (const auto& inst : it->second.instances) best = std::max(best, iou(p.segment(), inst.segment));
      }
      total += best;
      ++count;
    }
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

}  // namespace talforge
