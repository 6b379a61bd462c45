#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "talforge/layers.hpp"
#include "talforge/ops.hpp"
#include "talforge/types.hpp"

namespace talforge {

struct ProposalNetConfig {
  std::size_t temporal_scale = 32;  // T
  std::size_t max_duration = 32;    // D_max
  std::size_t num_samples = 8;      // N_sample
  std::size_t feature_dim = 16;
  std::size_t lstm_hidden = 16;
  std::size_t encoder_width = 32;
  std::size_t encoder_layers = 2;
  std::size_t head_width = 32;
  std::size_t map_hidden = 32;

  void validate() const;
  std::size_t encoded_width() const { return encoder_width; }
};

struct LossConfig {
  double lambda_cls = 1.0;
  double lambda_reg = 10.0;
};

struct TrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  double grad_clip = 5.0;
  std::uint64_t seed = 7;
};

/// Linear interpolation along time mapping source positions [0, L-1] onto
/// [0, target-1].
Tensor rescale_features(const Tensor& raw, std::size_t target_length);

struct BoundaryProbabilityPair {
  std::vector<double> start_probs;
  std::vector<double> end_probs;
};

/// Entry (d, t) scores the grid segment [t, t + d + 1]; cells with
/// t + d + 1 > T are invalid and hold no score.
class BMConfidenceMap {
 public:
  BMConfidenceMap(std::size_t max_duration, std::size_t temporal_scale);

  std::size_t max_duration() const { return max_duration_; }
  std::size_t temporal_scale() const { return temporal_scale_; }
  bool valid(std::size_t d, std::size_t t) const { return d < max_duration_ && t < temporal_scale_ && t + d + 1 <= temporal_scale_; }

  double cls(std::size_t d, std::size_t t) const;
  double reg(std::size_t d, std::size_t t) const;
  void set(std::size_t d, std::size_t t, double cls_value, double reg_value);

 private:
  std::size_t index(std::size_t d, std::size_t t) const;

  std::size_t max_duration_;
  std::size_t temporal_scale_;
  std::vector<double> cls_;
  std::vector<double> reg_;
};

struct GridCell {
  std::size_t duration_index;  // d
  std::size_t start_index;     // t
};

/// Interpolation weights turning encoded rows into N_sample samples per
/// BM-map cell. Row r = (d * T + t) * N_sample + n.
class SamplingMask {
 public:
  std::size_t temporal_scale() const { return temporal_scale_; }
  std::size_t max_duration() const { return max_duration_; }
  std::size_t num_samples() const { return num_samples_; }

  /// Valid cells in row order (d-major).
  const std::vector<GridCell>& valid_cells() const { return valid_cells_; }
  /// Taps for every row, zero weights on rows of invalid cells.
  const std::vector<RowTaps>& rows() const { return rows_; }
  /// Taps for valid-cell rows only, in valid_cells() order.
  const std::vector<RowTaps>& valid_rows() const { return valid_rows_; }
  /// Row-major [(D_max * T * N_sample) x T] weight matrix.
  std::vector<double> dense() const;

 private:
  friend SamplingMask build_sampling_mask(std::size_t, std::size_t, std::size_t);
  std::size_t temporal_scale_ = 0;
  std::size_t max_duration_ = 0;
  std::size_t num_samples_ = 0;
  std::vector<GridCell> valid_cells_;
  std::vector<RowTaps> rows_;
  std::vector<RowTaps> valid_rows_;
};

/// Two-point interpolation taps for a position on a grid of `length` points,
/// after clamping to [0, length-1].
RowTaps interpolation_taps(double position, std::size_t length);

SamplingMask build_sampling_mask(std::size_t temporal_scale, std::size_t max_duration, std::size_t num_samples);

struct EncoderParams {
  BiLstmParams lstm;
  std::vector<Conv1dParams> convs;
};

struct TemporalEvalParams {
  Conv1dParams hidden;  // k = 3, relu
  Conv1dParams output;  // k = 1, sigmoid, 2 channels (start, end)
};

struct BMMapParams {
  LinearParams hidden;  // (N_sample * E) -> map_hidden, relu
  LinearParams output;  // map_hidden -> 2, sigmoid (cls, reg)
};

struct BoundaryTensors {
  Tensor start;  // [T]
  Tensor end;    // [T]
};

/// features [T x D] -> encoded [T x E]: BiLSTM output concatenated with the
/// input, followed by the "same"-padded conv stack.
Tensor encode_features(const Tensor& features, const EncoderParams& p);
BoundaryTensors temporal_eval(const Tensor& encoded, const TemporalEvalParams& p);
/// [n_valid x 2] confidences (cls, reg) for mask.valid_cells().
Tensor bm_confidence_tensor(const Tensor& encoded, const SamplingMask& mask, const BMMapParams& p);
BMConfidenceMap bm_confidence_map(const Tensor& encoded, const SamplingMask& mask, const BMMapParams& p);

BoundaryProbabilityPair to_probabilities(const BoundaryTensors& b);
BMConfidenceMap to_confidence_map(const Tensor& cell_scores, const SamplingMask& mask);

struct ProposalNetOutput {
  Tensor encoded;
  BoundaryTensors boundaries;
  Tensor map;  // [n_valid x 2]
};

class ProposalNet {
 public:
  ProposalNet(const ProposalNetConfig& cfg, std::uint64_t seed);

  const ProposalNetConfig& config() const { return cfg_; }
  const SamplingMask& mask() const { return mask_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

  EncoderParams& encoder() { return encoder_; }
  TemporalEvalParams& temporal_head() { return temporal_; }
  BMMapParams& map_head() { return map_; }

  Tensor encode(const Tensor& features) const { return encode_features(features, encoder_); }
  ProposalNetOutput forward(const Tensor& features) const;

 private:
  ProposalNetConfig cfg_;
  SamplingMask mask_;
  EncoderParams encoder_;
  TemporalEvalParams temporal_;
  BMMapParams map_;
  ParameterSet params_;
};

struct TrainingLabels {
  std::vector<double> start;  // [T]
  std::vector<double> end;    // [T]
  std::vector<double> map;    // [D_max x T], zero on invalid cells
};

/// Grid point i sits at time i * duration / T. Boundary labels are 1 within
/// max(1 cell, 10% of the instance length) of a true boundary; map labels are
/// the best IoU of the cell's segment with any instance.
TrainingLabels make_labels(const VideoAnnotation& annotation, const ProposalNetConfig& cfg);

/// Class-balanced logistic loss: positives (label >= threshold) and
/// negatives each carry half the weight; a one-sided label set is averaged
/// over all entries.
Tensor balanced_bce(const Tensor& probs, const std::vector<double>& labels, double threshold = 0.5);

Tensor joint_loss(const ProposalNetOutput& pred, const TrainingLabels& labels, const SamplingMask& mask,
                  const LossConfig& cfg);

struct TrainingExample {
  FeatureSequence video;  // rescaled to T
  TrainingLabels labels;
};

struct TrainLog {
  std::vector<double> epoch_loss;
};

TrainingExample make_training_example(const FeatureSequence& raw, const VideoAnnotation& annotation,
                                      const ProposalNetConfig& cfg);

TrainLog train_proposal_net(ProposalNet& net, const std::vector<TrainingExample>& data, const TrainConfig& train,
                            const LossConfig& loss);

}  // namespace talforge
