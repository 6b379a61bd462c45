#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "talforge/layers.hpp"
#include "talforge/proposal_net.hpp"
#include "talforge/types.hpp"

namespace talforge {

struct CascadeConfig {
  std::size_t n_stages = 3;
  std::vector<double> iou_floors{0.5, 0.6, 0.7};
  double context_ratio = 0.25;
  std::size_t n_bins = 16;
  std::size_t hidden = 32;
  /// Highest-scored proposals per video handed to the cascade.
  std::size_t max_proposals = 100;
  TrainConfig train{0.02, 0.9, 8, 64, 5.0, 11};

  void validate() const;
};

/// Regression head of one stage: features -> hidden (relu) -> (ds, de, c).
struct StageParams {
  LinearParams hidden;
  LinearParams output;
};

struct StageOutput {
  double delta_start = 0.0;
  double delta_end = 0.0;
  double confidence_logit = 0.0;
};

/// Interpolated encoder rows at n_bins uniform positions over
/// [s - r*len, e + r*len] (grid units, clamped to the grid), flattened to
/// [n_bins * E]. Differentiable with respect to `encoded`.
Tensor sample_proposal_feature(const Tensor& encoded, const Proposal& p, double duration_seconds, double context_ratio,
                               std::size_t n_bins);

/// Applies head outputs to a proposal: boundaries move by offsets relative to
/// the proposal length and are clamped to [0, duration]; a crossing result
/// keeps the input boundaries. The score is multiplied by 2*sigmoid(c) and
/// clamped to [0, 1].
Proposal apply_stage_output(const Proposal& p, const StageOutput& out, double duration_seconds);

/// Evaluates the stage head on a batch of flattened features [B x F].
Tensor stage_head(const Tensor& features, const StageParams& params);

Proposal refine_stage(const Proposal& p, const Tensor& feature, const StageParams& params, double duration_seconds);

class CascadeRefiner {
 public:
  /// Hidden layers are randomly initialised; output layers start at zero so
  /// an untrained cascade is the identity.
  CascadeRefiner(std::size_t encoded_width, const CascadeConfig& cfg, std::uint64_t seed);

  const CascadeConfig& config() const { return cfg_; }
  std::size_t encoded_width() const { return encoded_width_; }
  std::vector<StageParams>& stages() { return stages_; }
  const std::vector<StageParams>& stages() const { return stages_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

  /// Runs stages [0, stage_count) in order; output order follows the input.
  std::vector<Proposal> refine(const std::vector<Proposal>& proposals, const Tensor& encoded, double duration_seconds,
                               std::size_t stage_count) const;
  std::vector<Proposal> refine(const std::vector<Proposal>& proposals, const Tensor& encoded,
                               double duration_seconds) const {
    return refine(proposals, encoded, duration_seconds, stages_.size());
  }

 private:
  CascadeConfig cfg_;
  std::size_t encoded_width_;
  std::vector<StageParams> stages_;
  ParameterSet params_;
};

std::vector<Proposal> cascade_refine(const std::vector<Proposal>& proposals, const Tensor& encoded,
                                     double duration_seconds, const CascadeRefiner& refiner);

struct CascadeTarget {
  double delta_start = 0.0;
  double delta_end = 0.0;
  double iou = 0.0;
  bool positive = false;
};

/// Matches each proposal to its maximal-IoU instance. Offsets map the
/// proposal onto that instance; proposals below `iou_floor` are negatives.
std::vector<CascadeTarget> make_cascade_targets(const std::vector<Proposal>& proposals,
                                                const std::vector<GroundTruth>& instances, double iou_floor);

struct CascadeVideo {
  std::string video_id;
  double duration_seconds = 0.0;
  Tensor encoded;  // frozen proposal-net encoding [T x E]
  std::vector<Proposal> proposals;
  std::vector<GroundTruth> instances;
};

struct CascadeTrainLog {
  /// stage -> per-epoch mean loss
  std::vector<std::vector<double>> stage_loss;
};

/// Trains stages one after another; stage k sees proposals refined by the
/// already-trained stages 0..k-1.
CascadeTrainLog train_cascade(CascadeRefiner& refiner, const std::vector<CascadeVideo>& data);

}  // namespace talforge
