#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "talforge/types.hpp"

namespace talforge {

/// Desk-scale stand-in for an annotated video corpus.
///
/// Feature channel layout per snippet: one indicator channel per class
/// (1 while an instance of that class covers the snippet centre), then a
/// start-bump and an end-bump channel (unit-width Gaussians around the
/// boundaries), then noise-only channels. Every channel receives additive
/// N(0, noise^2). All instances of a video share one class.
struct SyntheticSpec {
  std::size_t n_videos = 250;
  std::size_t n_validation = 50;  // the last n_validation videos
  double duration_min = 30.0;
  double duration_max = 120.0;
  std::size_t instances_min = 1;
  std::size_t instances_max = 3;
  double instance_fraction_min = 0.1;  // instance length / duration
  double instance_fraction_max = 0.35;
  std::size_t n_classes = 5;
  std::size_t feature_dim = 16;
  std::size_t snippets_min = 48;  // raw sequence length before rescaling
  std::size_t snippets_max = 96;
  double noise = 0.25;
  double absent_class_score = 0.05;
  std::uint64_t seed = 7;

  void validate() const;
};

struct SyntheticDataset {
  std::map<std::string, Tensor> features;  // raw [L x D] per video
  AnnotationSet annotations;
  ClassScoreSet class_scores;
};

SyntheticDataset gen_synthetic(const SyntheticSpec& spec);

std::string class_name(std::size_t index);

/// Layout: <dir>/annotations.json, <dir>/class_scores.json,
/// <dir>/features/<video_id>.talf
void write_dataset(const std::filesystem::path& dir, const SyntheticDataset& data);

}  // namespace talforge
