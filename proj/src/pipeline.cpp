#include "talforge/pipeline.hpp"

#include <algorithm>
#include <stdexcept>

#include "talforge/evaluation.hpp"
#include "talforge/io.hpp"
#include "talforge/parallel.hpp"
#include "talforge/postprocess.hpp"

namespace talforge {

namespace {

const FeatureSequence& features_of(const Dataset& data, const std::string& id) {
  auto it = data.features.find(id);
  if (it == data.features.end()) throw std::invalid_argument("no features loaded for video " + id);
  return it->second;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset data;
  data.annotations = load_annotations(dir / "annotations.json");
  data.class_scores = load_class_scores(dir / "class_scores.json");
  for (const auto& [id, ann] : data.annotations.videos) {
    auto path = dir / "features" / (id + ".talf");
    if (!std::filesystem::exists(path)) path = dir / "features" / (id + ".csv");
    if (!std::filesystem::exists(path)) {
      throw std::invalid_argument("missing feature file for video " + id + " (expected " +
                                  (dir / "features" / (id + ".talf")).string() + " or .csv)");
    }
    data.features.emplace(id, FeatureSequence{id, ann.duration_seconds, load_features(path)});
  }
  return data;
}

Dataset dataset_from_synthetic(const SyntheticDataset& synth) {
  Dataset data;
  data.annotations = synth.annotations;
  data.class_scores = synth.class_scores;
  for (const auto& [id, features] : synth.features) {
    data.features.emplace(id, FeatureSequence{id, synth.annotations.videos.at(id).duration_seconds, features});
  }
  return data;
}

TrainedModels init_models(const PipelineConfig& cfg) {
  cfg.validate();
  ProposalNet net(cfg.model, cfg.train.seed);
  CascadeRefiner cascade(cfg.model.encoded_width(), cfg.cascade, cfg.cascade.train.seed);
  return {std::move(net), std::move(cascade)};
}

TrainLog train_proposal_stage(TrainedModels& models, const Dataset& data, const PipelineConfig& cfg) {
  const auto ids = data.annotations.video_ids("training");
  std::vector<TrainingExample> examples(ids.size());
  parallel_for(ids.size(), [&](std::size_t i) {
    examples[i] = make_training_example(features_of(data, ids[i]), data.annotations.videos.at(ids[i]), cfg.model);
  });
  return train_proposal_net(models.net, examples, cfg.train, cfg.loss);
}

CascadeTrainLog train_cascade_stage(TrainedModels& models, const Dataset& data, const PipelineConfig& cfg) {
  const auto ids = data.annotations.video_ids("training");
  std::vector<CascadeVideo> videos(ids.size());
  parallel_for(ids.size(), [&](std::size_t i) {
    const auto& ann = data.annotations.videos.at(ids[i]);
    auto inf = infer_video(models.net, features_of(data, ids[i]), cfg.cascade.max_proposals);
    videos[i] = CascadeVideo{ids[i], ann.duration_seconds, inf.encoded, std::move(inf.proposals), ann.instances};
  });
  return train_cascade(models.cascade, videos);
}

VideoInference infer_video(const ProposalNet& net, const FeatureSequence& video, std::size_t max_proposals) {
  NoGradGuard no_grad;
  const auto& cfg = net.config();
  const Tensor features = rescale_features(video.features, cfg.temporal_scale);
  auto out = net.forward(features);
  VideoInference inf{out.encoded, to_probabilities(out.boundaries), to_confidence_map(out.map, net.mask()), {}};
  auto proposals = fuse_scores(generate_candidates(inf.probs, cfg.max_duration), inf.map, video.duration_seconds);
  std::stable_sort(proposals.begin(), proposals.end(),
                   [](const Proposal& a, const Proposal& b) { return a.score > b.score; });
  if (proposals.size() > max_proposals) proposals.resize(max_proposals);
  inf.proposals = std::move(proposals);
  return inf;
}

ProposalSet infer_proposals(const ProposalNet& net, const Dataset& data, const std::string& subset,
                            std::size_t max_proposals) {
  const auto ids = data.annotations.video_ids(subset);
  std::vector<std::vector<Proposal>> out(ids.size());
  parallel_for(ids.size(),
               [&](std::size_t i) { out[i] = infer_video(net, features_of(data, ids[i]), max_proposals).proposals; });
  ProposalSet result;
  for (std::size_t i = 0; i < ids.size(); ++i) result.emplace(ids[i], std::move(out[i]));
  return result;
}

ProposalSet refine_proposals(const TrainedModels& models, const Dataset& data, const ProposalSet& proposals) {
  std::vector<std::string> ids;
  for (const auto& [id, list] : proposals) ids.push_back(id);
  std::vector<std::vector<Proposal>> out(ids.size());
  parallel_for(ids.size(), [&](std::size_t i) {
    const auto& video = features_of(data, ids[i]);
    const Tensor encoded = models.net.encode(rescale_features(video.features, models.net.config().temporal_scale));
    out[i] = models.cascade.refine(proposals.at(ids[i]), encoded, video.duration_seconds);
  });
  ProposalSet result;
  for (std::size_t i = 0; i < ids.size(); ++i) result.emplace(ids[i], std::move(out[i]));
  return result;
}

std::vector<Detection> classify(const ProposalSet& proposals, const ClassScoreSet& classes, std::size_t top_k) {
  std::vector<Detection> detections;
  for (const auto& [id, list] : proposals) {
    auto it = classes.find(id);
    if (it == classes.end()) throw std::invalid_argument("no class scores for video " + id);
    auto dets = assign_classes(id, list, it->second, top_k);
    detections.insert(detections.end(), dets.begin(), dets.end());
  }
  return detections;
}

std::vector<Detection> postprocess(const ProposalSet& proposals, const ClassScoreSet& classes,
                                   const PostprocessConfig& cfg) {
  cfg.nms.validate();
  ProposalSet suppressed;
  for (const auto& [id, list] : proposals) suppressed.emplace(id, soft_nms(list, cfg.nms));
  return classify(suppressed, classes, cfg.top_k);
}

AnnotationSet subset_annotations(const AnnotationSet& all, const std::string& subset) {
  AnnotationSet out;
  for (const auto& [id, ann] : all.videos) {
    if (subset.empty() || ann.subset == subset) out.videos.emplace(id, ann);
  }
  return out;
}

PipelineResult run_inference(const TrainedModels& models, const Dataset& data, const PipelineConfig& cfg,
                             const std::string& subset) {
  PipelineResult r;
  r.coarse = infer_proposals(models.net, data, subset, cfg.cascade.max_proposals);
  r.refined = refine_proposals(models, data, r.coarse);
  r.detections = postprocess(r.refined, data.class_scores, cfg.postprocess);
  r.report = mean_map(r.detections, subset_annotations(data.annotations, subset), cfg.eval);
  return r;
}

}  // namespace talforge
