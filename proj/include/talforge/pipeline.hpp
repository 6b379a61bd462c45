#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "talforge/cascade.hpp"
#include "talforge/config.hpp"
#include "talforge/proposal_net.hpp"
#include "talforge/types.hpp"

namespace talforge {

/// A dataset directory: annotations.json, class_scores.json and
/// features/<video_id>.talf (or .csv).
struct Dataset {
  AnnotationSet annotations;
  ClassScoreSet class_scores;
  std::map<std::string, FeatureSequence> features;  // raw length, not rescaled
};

/// Loads annotations and class scores plus the features of every annotated
/// video. A missing feature file is an error naming the video.
Dataset load_dataset(const std::filesystem::path& dir);
Dataset dataset_from_synthetic(const SyntheticDataset& data);

struct TrainedModels {
  ProposalNet net;
  CascadeRefiner cascade;
};

/// Freshly initialised models (the untrained-weights baseline).
TrainedModels init_models(const PipelineConfig& cfg);

TrainLog train_proposal_stage(TrainedModels& models, const Dataset& data, const PipelineConfig& cfg);
CascadeTrainLog train_cascade_stage(TrainedModels& models, const Dataset& data, const PipelineConfig& cfg);

struct VideoInference {
  Tensor encoded;  // [T x E]
  BoundaryProbabilityPair probs;
  BMConfidenceMap map;
  std::vector<Proposal> proposals;  // best max_proposals by score, descending
};

VideoInference infer_video(const ProposalNet& net, const FeatureSequence& video, std::size_t max_proposals);

/// Proposal-net output for the videos of one subset ("" = all).
ProposalSet infer_proposals(const ProposalNet& net, const Dataset& data, const std::string& subset,
                            std::size_t max_proposals);

/// Runs every cascade stage on each video's proposals; encodings are
/// recomputed with `net`.
ProposalSet refine_proposals(const TrainedModels& models, const Dataset& data, const ProposalSet& proposals);

/// Soft-NMS per video followed by top-k class assignment. Videos without
/// class scores are an error.
std::vector<Detection> postprocess(const ProposalSet& proposals, const ClassScoreSet& classes,
                                   const PostprocessConfig& cfg);

/// Class assignment only, for proposal sets that are already suppressed
/// (ensemble output).
std::vector<Detection> classify(const ProposalSet& proposals, const ClassScoreSet& classes, std::size_t top_k);

struct PipelineResult {
  ProposalSet coarse;
  ProposalSet refined;
  std::vector<Detection> detections;
  MapReport report;
};

/// infer -> refine -> postprocess -> evaluate on `subset`.
PipelineResult run_inference(const TrainedModels& models, const Dataset& data, const PipelineConfig& cfg,
                             const std::string& subset);

/// Ground truth restricted to one subset, for evaluation.
AnnotationSet subset_annotations(const AnnotationSet& all, const std::string& subset);

}  // namespace talforge
