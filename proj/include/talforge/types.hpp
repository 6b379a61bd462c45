#pragma once

#include <map>
#include <string>
#include <vector>

#include "talforge/tensor.hpp"

namespace talforge {

/// Closed time interval in seconds.
struct Segment {
  double start = 0.0;
  double end = 0.0;

  double length() const { return end - start; }
  bool operator==(const Segment&) const = default;
};

struct Proposal {
  double t_start = 0.0;
  double t_end = 0.0;
  double score = 0.0;
  std::string provenance;

  Segment segment() const { return {t_start, t_end}; }
  bool operator==(const Proposal&) const = default;
};

/// Proposals keyed by video id.
using ProposalSet = std::map<std::string, std::vector<Proposal>>;

struct Detection {
  std::string video_id;
  Proposal proposal;
  std::string label;
  double score = 0.0;

  bool operator==(const Detection&) const = default;
};

struct GroundTruth {
  std::string label;
  Segment segment;

  bool operator==(const GroundTruth&) const = default;
};

struct VideoAnnotation {
  double duration_seconds = 0.0;
  std::string subset;
  std::vector<GroundTruth> instances;

  bool operator==(const VideoAnnotation&) const = default;
};

struct AnnotationSet {
  std::map<std::string, VideoAnnotation> videos;

  std::vector<std::string> video_ids(const std::string& subset = "") const;
  bool operator==(const AnnotationSet&) const = default;
};

struct VideoClassScores {
  std::string video_id;
  std::map<std::string, double> scores;
};

using ClassScoreSet = std::map<std::string, VideoClassScores>;

/// T x D snippet features of one video.
struct FeatureSequence {
  std::string video_id;
  double duration_seconds = 0.0;
  Tensor features;
};

}  // namespace talforge
