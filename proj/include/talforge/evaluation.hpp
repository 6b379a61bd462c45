#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "talforge/types.hpp"

namespace talforge {

/// Temporal intersection over union. Both segments must satisfy start < end.
double iou(const Segment& a, const Segment& b);

struct EvalConfig {
  /// 0.50, 0.55, ..., 0.95
  std::vector<double> iou_thresholds = default_thresholds();

  static std::vector<double> default_thresholds();
  void validate() const;
};

struct PrecisionRecall {
  std::vector<double> recall;
  std::vector<double> precision;
};

struct ApResult {
  double ap = 0.0;
  PrecisionRecall curve;
};

/// Ground truth of one class grouped by video.
using ClassGroundTruth = std::map<std::string, std::vector<Segment>>;

/// Area under the monotone (non-increasing envelope) precision-recall curve.
/// Detections are ranked by score, ties kept in input order; each detection
/// claims the highest-IoU unmatched ground truth of its video with IoU >= thr.
/// Returns nullopt when the class has no ground truth.
std::optional<ApResult> average_precision(const std::vector<Detection>& detections, const ClassGroundTruth& gts,
                                          double iou_thr);

struct MapReport {
  std::map<double, double> per_threshold;
  double average_map = 0.0;
  /// class -> (threshold -> AP)
  std::map<std::string, std::map<double, double>> per_class;
  /// class -> (threshold -> PR curve)
  std::map<std::string, std::map<double, PrecisionRecall>> curves;
};

/// Classes come from the ground truth of the videos in `gts`; detections on
/// other videos are ignored.
MapReport mean_map(const std::vector<Detection>& detections, const AnnotationSet& gts, const EvalConfig& cfg);

/// Fraction of ground-truth instances covered (IoU >= thr) by one of the k
/// highest-scored proposals of their video.
double average_recall_at_k(const ProposalSet& proposals, const AnnotationSet& gts, std::size_t k, double iou_thr);

/// Mean over proposals of the best IoU with any ground truth of the same video.
double mean_best_iou(const ProposalSet& proposals, const AnnotationSet& gts);

}  // namespace talforge
