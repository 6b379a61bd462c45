#include "talforge/proposal_net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "talforge/evaluation.hpp"
#include "talforge/optim.hpp"
#include "talforge/rng.hpp"

namespace talforge {

void ProposalNetConfig::validate() const {
  if (temporal_scale < 2) throw std::invalid_argument("temporal_scale must be >= 2");
  if (max_duration < 1 || max_duration > temporal_scale) {
    throw std::invalid_argument("max_duration must lie in [1, temporal_scale]");
  }
  if (num_samples < 2) throw std::invalid_argument("num_samples must be >= 2");
  if (feature_dim < 1 || lstm_hidden < 1 || encoder_width < 1 || encoder_layers < 1 || head_width < 1 ||
      map_hidden < 1) {
    throw std::invalid_argument("network widths must be >= 1");
  }
}

RowTaps interpolation_taps(double position, std::size_t length) {
  const double top = static_cast<double>(length - 1);
  const double p = std::clamp(position, 0.0, top);
  const double lo = std::floor(p);
  const double frac = p - lo;
  const auto lo_idx = static_cast<std::uint32_t>(lo);
  if (frac == 0.0 || lo_idx + 1 >= length) return {lo_idx, lo_idx, 1.0, 0.0};
  return {lo_idx, lo_idx + 1, 1.0 - frac, frac};
}

Tensor rescale_features(const Tensor& raw, std::size_t target_length) {
  if (raw.rank() != 2 || raw.dim(0) == 0) throw std::invalid_argument("rescale_features: empty input");
  if (target_length < 2) throw std::invalid_argument("rescale_features: target length must be >= 2");
  const std::size_t length = raw.dim(0);
  std::vector<RowTaps> taps(target_length);
  const double stride = static_cast<double>(length - 1) / static_cast<double>(target_length - 1);
  for (std::size_t j = 0; j < target_length; ++j) {
    taps[j] = length == 1 ? RowTaps{0, 0, 1.0, 0.0} : interpolation_taps(static_cast<double>(j) * stride, length);
  }
  return gather_rows(raw, taps);
}

BMConfidenceMap::BMConfidenceMap(std::size_t max_duration, std::size_t temporal_scale)
    : max_duration_(max_duration),
      temporal_scale_(temporal_scale),
      cls_(max_duration * temporal_scale, 0.0),
      reg_(max_duration * temporal_scale, 0.0) {}

std::size_t BMConfidenceMap::index(std::size_t d, std::size_t t) const {
  if (!valid(d, t)) {
    throw std::out_of_range("BM map cell (d=" + std::to_string(d) + ", t=" + std::to_string(t) +
                            ") is outside the valid region");
  }
  return d * temporal_scale_ + t;
}

double BMConfidenceMap::cls(std::size_t d, std::size_t t) const { return cls_[index(d, t)]; }
double BMConfidenceMap::reg(std::size_t d, std::size_t t) const { return reg_[index(d, t)]; }

void BMConfidenceMap::set(std::size_t d, std::size_t t, double cls_value, double reg_value) {
  const auto i = index(d, t);
  cls_[i] = cls_value;
  reg_[i] = reg_value;
}

std::vector<double> SamplingMask::dense() const {
  std::vector<double> out(rows_.size() * temporal_scale_, 0.0);
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    out[r * temporal_scale_ + rows_[r].lo] += rows_[r].w_lo;
    out[r * temporal_scale_ + rows_[r].hi] += rows_[r].w_hi;
  }
  return out;
}

SamplingMask build_sampling_mask(std::size_t temporal_scale, std::size_t max_duration, std::size_t num_samples) {
  if (max_duration < 1 || temporal_scale < 1) throw std::invalid_argument("sampling mask: extents must be >= 1");
  if (max_duration > temporal_scale) {
    throw std::invalid_argument("sampling mask: D_max (" + std::to_string(max_duration) + ") exceeds T (" +
                                std::to_string(temporal_scale) + ")");
  }
  if (num_samples < 2) throw std::invalid_argument("sampling mask: N_sample must be >= 2");
  SamplingMask mask;
  mask.temporal_scale_ = temporal_scale;
  mask.max_duration_ = max_duration;
  mask.num_samples_ = num_samples;
  mask.rows_.assign(max_duration * temporal_scale * num_samples, RowTaps{});
  for (std::size_t d = 0; d < max_duration; ++d) {
    for (std::size_t t = 0; t < temporal_scale; ++t) {
      if (t + d + 1 > temporal_scale) continue;
      mask.valid_cells_.push_back({d, t});
      for (std::size_t n = 0; n < num_samples; ++n) {
        const double offset = static_cast<double>(n * (d + 1)) / static_cast<double>(num_samples - 1);
        const RowTaps taps = interpolation_taps(static_cast<double>(t) + offset, temporal_scale);
        mask.rows_[(d * temporal_scale + t) * num_samples + n] = taps;
        mask.valid_rows_.push_back(taps);
      }
    }
  }
  return mask;
}

Tensor encode_features(const Tensor& features, const EncoderParams& p) {
  Tensor context = bilstm(features, p.lstm);
  Tensor y = transpose(concat_cols({features, context}));
  for (const auto& conv : p.convs) y = conv1d(y, conv);
  return transpose(y);
}

BoundaryTensors temporal_eval(const Tensor& encoded, const TemporalEvalParams& p) {
  Tensor y = conv1d(conv1d(transpose(encoded), p.hidden), p.output);
  if (y.dim(0) != 2) throw std::invalid_argument("temporal_eval: output conv must have 2 channels");
  const std::size_t steps = y.dim(1);
  return {reshape(slice_rows(y, 0, 1), {steps}), reshape(slice_rows(y, 1, 2), {steps})};
}

Tensor bm_confidence_tensor(const Tensor& encoded, const SamplingMask& mask, const BMMapParams& p) {
  if (encoded.rank() != 2 || encoded.dim(0) != mask.temporal_scale()) {
    throw std::invalid_argument("bm_confidence_map: encoded " + shape_to_string(encoded.shape()) +
                                " does not match mask built for T=" + std::to_string(mask.temporal_scale()));
  }
  const std::size_t cells = mask.valid_cells().size();
  Tensor samples = gather_rows(encoded, mask.valid_rows());
  Tensor per_cell = reshape(samples, {cells, mask.num_samples() * encoded.dim(1)});
  return sigmoid(linear(relu(linear(per_cell, p.hidden)), p.output));
}

BMConfidenceMap to_confidence_map(const Tensor& cell_scores, const SamplingMask& mask) {
  const auto& cells = mask.valid_cells();
  if (cell_scores.rank() != 2 || cell_scores.dim(0) != cells.size() || cell_scores.dim(1) != 2) {
    throw std::invalid_argument("to_confidence_map: expected [n_valid x 2] scores");
  }
  BMConfidenceMap map(mask.max_duration(), mask.temporal_scale());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    map.set(cells[c].duration_index, cells[c].start_index, cell_scores.at(c, 0), cell_scores.at(c, 1));
  }
  return map;
}

BMConfidenceMap bm_confidence_map(const Tensor& encoded, const SamplingMask& mask, const BMMapParams& p) {
  return to_confidence_map(bm_confidence_tensor(encoded, mask, p), mask);
}

BoundaryProbabilityPair to_probabilities(const BoundaryTensors& b) {
  return {{b.start.data().begin(), b.start.data().end()}, {b.end.data().begin(), b.end.data().end()}};
}

ProposalNet::ProposalNet(const ProposalNetConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), mask_(build_sampling_mask(cfg.temporal_scale, cfg.max_duration, cfg.num_samples)) {
  cfg_.validate();
  Rng rng(seed);
  encoder_.lstm = make_bilstm(cfg.feature_dim, cfg.lstm_hidden, rng);
  std::size_t channels = cfg.feature_dim + 2 * cfg.lstm_hidden;
  for (std::size_t i = 0; i < cfg.encoder_layers; ++i) {
    encoder_.convs.push_back(make_conv1d(channels, cfg.encoder_width, 3, 1, Activation::kRelu, rng));
    channels = cfg.encoder_width;
  }
  temporal_.hidden = make_conv1d(channels, cfg.head_width, 3, 1, Activation::kRelu, rng);
  temporal_.output = make_conv1d(cfg.head_width, 2, 1, 0, Activation::kSigmoid, rng);
  map_.hidden = make_linear(cfg.num_samples * channels, cfg.map_hidden, rng);
  map_.output = make_linear(cfg.map_hidden, 2, rng);

  params_.add("encoder.lstm", encoder_.lstm);
  for (std::size_t i = 0; i < encoder_.convs.size(); ++i) params_.add("encoder.conv" + std::to_string(i), encoder_.convs[i]);
  params_.add("temporal.hidden", temporal_.hidden);
  params_.add("temporal.output", temporal_.output);
  params_.add("map.hidden", map_.hidden);
  params_.add("map.output", map_.output);
}

ProposalNetOutput ProposalNet::forward(const Tensor& features) const {
  if (features.rank() != 2 || features.dim(0) != cfg_.temporal_scale || features.dim(1) != cfg_.feature_dim) {
    throw std::invalid_argument("proposal net expects features [" + std::to_string(cfg_.temporal_scale) + "x" +
                                std::to_string(cfg_.feature_dim) + "], got " + shape_to_string(features.shape()));
  }
  ProposalNetOutput out;
  out.encoded = encode(features);
  out.boundaries = temporal_eval(out.encoded, temporal_);
  out.map = bm_confidence_tensor(out.encoded, mask_, map_);
  return out;
}

TrainingLabels make_labels(const VideoAnnotation& annotation, const ProposalNetConfig& cfg) {
  const std::size_t steps = cfg.temporal_scale;
  TrainingLabels labels;
  labels.start.assign(steps, 0.0);
  labels.end.assign(steps, 0.0);
  labels.map.assign(cfg.max_duration * steps, 0.0);
  if (!(annotation.duration_seconds > 0)) throw std::invalid_argument("make_labels: duration must be positive");
  const double cell = annotation.duration_seconds / static_cast<double>(steps);
  constexpr double kSlack = 1e-9;

  for (const auto& gt : annotation.instances) {
    const auto& seg = gt.segment;
    if (!(seg.end > seg.start) || seg.start < 0 || seg.end > annotation.duration_seconds) {
      throw std::invalid_argument("make_labels: instance outside [0, duration] or degenerate");
    }
    const double half_width = std::max(1.0, 0.1 * seg.length() / cell);
    const double start_pos = seg.start / cell;
    const double end_pos = seg.end / cell;
    for (std::size_t t = 0; t < steps; ++t) {
      const auto pos = static_cast<double>(t);
      if (std::abs(pos - start_pos) <= half_width + kSlack) labels.start[t] = 1.0;
      if (std::abs(pos - end_pos) <= half_width + kSlack) labels.end[t] = 1.0;
    }
  }
  for (std::size_t d = 0; d < cfg.max_duration; ++d) {
    for (std::size_t t = 0; t + d + 1 <= steps; ++t) {
      const Segment cell_seg{static_cast<double>(t) * cell, static_cast<double>(t + d + 1) * cell};
      double best = 0.0;
      for (const auto& gt : annotation.instances) best = std::max(best, iou(cell_seg, gt.segment));
      labels.map[d * steps + t] = best;
    }
  }
  return labels;
}

Tensor balanced_bce(const Tensor& probs, const std::vector<double>& labels, double threshold) {
  const std::size_t n = probs.numel();
  if (labels.size() != n) throw std::invalid_argument("balanced_bce: label count does not match predictions");
  if (n == 0) throw std::invalid_argument("balanced_bce: empty input");
  for (double p : probs.data()) {
    if (!std::isfinite(p)) throw std::domain_error("balanced_bce: non-finite prediction");
  }
  std::size_t positives = 0;
  for (double y : labels) positives += y >= threshold ? 1 : 0;
  const std::size_t negatives = n - positives;
  double w_pos = 0.0;
  double w_neg = 0.0;
  if (positives > 0 && negatives > 0) {
    w_pos = 0.5 / static_cast<double>(positives);
    w_neg = 0.5 / static_cast<double>(negatives);
  } else {
    w_pos = w_neg = 1.0 / static_cast<double>(n);
  }
  std::vector<double> pos_weights(n), neg_weights(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool positive = labels[i] >= threshold;
    pos_weights[i] = positive ? -w_pos : 0.0;
    neg_weights[i] = positive ? 0.0 : -w_neg;
  }
  const Shape shape = probs.shape();
  Tensor log_p = log_clamped(probs);
  Tensor log_q = log_clamped(add_scalar(scale(probs, -1.0), 1.0));
  return add(sum(mul(log_p, Tensor::from_data(shape, std::move(pos_weights)))),
             sum(mul(log_q, Tensor::from_data(shape, std::move(neg_weights)))));
}

namespace {

// Weighted L2 over valid cells; mid- and low-IoU cells are down-weighted so
// each group carries as much total weight as the high-IoU group.
Tensor balanced_regression_loss(const Tensor& pred, const std::vector<double>& target) {
  const std::size_t n = target.size();
  std::size_t high = 0, mid = 0, low = 0;
  for (double y : target) {
    if (y > 0.7) {
      ++high;
    } else if (y > 0.3) {
      ++mid;
    } else {
      ++low;
    }
  }
  std::vector<double> weights(n, 1.0);
  if (high > 0) {
    const double w_mid = mid ? static_cast<double>(high) / static_cast<double>(mid) : 0.0;
    const double w_low = low ? static_cast<double>(high) / static_cast<double>(low) : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (target[i] > 0.7) continue;
      weights[i] = target[i] > 0.3 ? std::min(1.0, w_mid) : std::min(1.0, w_low);
    }
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  for (auto& w : weights) w *= 0.5 / total;
  Tensor diff = sub(pred, Tensor::from_data(pred.shape(), target));
  return sum(mul(square(diff), Tensor::from_data(pred.shape(), std::move(weights))));
}

}  // namespace

Tensor joint_loss(const ProposalNetOutput& pred, const TrainingLabels& labels, const SamplingMask& mask,
                  const LossConfig& cfg) {
  const auto& cells = mask.valid_cells();
  if (pred.map.rank() != 2 || pred.map.dim(0) != cells.size()) {
    throw std::invalid_argument("joint_loss: map prediction does not cover the valid cells");
  }
  for (double v : pred.map.data()) {
    if (!std::isfinite(v)) throw std::domain_error("joint_loss: non-finite map prediction");
  }
  std::vector<double> map_targets(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    map_targets[c] = labels.map[cells[c].duration_index * mask.temporal_scale() + cells[c].start_index];
  }
  Tensor cls = reshape(slice_cols(pred.map, 0, 1), {cells.size()});
  Tensor reg = reshape(slice_cols(pred.map, 1, 2), {cells.size()});

  Tensor loss = add(balanced_bce(pred.boundaries.start, labels.start), balanced_bce(pred.boundaries.end, labels.end));
  loss = add(loss, scale(balanced_bce(cls, map_targets, 0.5), cfg.lambda_cls));
  loss = add(loss, scale(balanced_regression_loss(reg, map_targets), cfg.lambda_reg));
  return loss;
}

TrainingExample make_training_example(const FeatureSequence& raw, const VideoAnnotation& annotation,
                                      const ProposalNetConfig& cfg) {
  TrainingExample ex;
  ex.video.video_id = raw.video_id;
  ex.video.duration_seconds = annotation.duration_seconds;
  {
    NoGradGuard no_grad;
    ex.video.features = rescale_features(raw.features, cfg.temporal_scale);
  }
  ex.labels = make_labels(annotation, cfg);
  return ex;
}

TrainLog train_proposal_net(ProposalNet& net, const std::vector<TrainingExample>& data, const TrainConfig& train,
                            const LossConfig& loss_cfg) {
  if (data.empty()) throw std::invalid_argument("train: no training videos");
  if (train.batch_size == 0) throw std::invalid_argument("train: batch_size must be >= 1");
  SgdMomentum opt(net.parameters(), train.learning_rate, train.momentum);
  TrainLog log;
  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = 0; epoch < train.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(train.seed, epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    }
    double total = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += train.batch_size) {
      const std::size_t end = std::min(order.size(), begin + train.batch_size);
      opt.zero_grad();
      for (std::size_t k = begin; k < end; ++k) {
        const auto& ex = data[order[k]];
        Tensor loss;
        try {
          loss = joint_loss(net.forward(ex.video.features), ex.labels, net.mask(), loss_cfg);
        } catch (const std::domain_error& e) {
          throw TrainingDiverged("proposal training diverged at epoch " + std::to_string(epoch + 1) + " (video " +
                                     ex.video.video_id + "): " + e.what(),
                                 epoch + 1);
        }
        if (!std::isfinite(loss.item())) {
          throw TrainingDiverged("proposal training diverged at epoch " + std::to_string(epoch + 1) + " (video " +
                                     ex.video.video_id + ")",
                                 epoch + 1);
        }
        total += loss.item();
        scale(loss, 1.0 / static_cast<double>(end - begin)).backward();
      }
      opt.clip_grad_norm(train.grad_clip);
      opt.step();
    }
    log.epoch_loss.push_back(total / static_cast<double>(data.size()));
  }
  return log;
}

}  // namespace talforge
