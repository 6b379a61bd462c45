#include "talforge/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "talforge/evaluation.hpp"
#include "talforge/ops.hpp"
#include "talforge/optim.hpp"
#include "talforge/rng.hpp"

namespace talforge {

void CascadeConfig::validate() const {
  if (n_stages < 1) throw std::invalid_argument("cascade: n_stages must be >= 1");
  if (iou_floors.size() != n_stages) throw std::invalid_argument("cascade: need one IoU floor per stage");
  for (std::size_t i = 0; i < iou_floors.size(); ++i) {
    if (!(iou_floors[i] > 0 && iou_floors[i] <= 1)) throw std::invalid_argument("cascade: IoU floors must lie in (0, 1]");
    if (i > 0 && iou_floors[i] < iou_floors[i - 1]) throw std::invalid_argument("cascade: IoU floors must not decrease");
  }
  if (!(context_ratio >= 0)) throw std::invalid_argument("cascade: context_ratio must be >= 0");
  if (n_bins < 2) throw std::invalid_argument("cascade: n_bins must be >= 2");
  if (hidden < 1) throw std::invalid_argument("cascade: hidden width must be >= 1");
  if (max_proposals < 1) throw std::invalid_argument("cascade: max_proposals must be >= 1");
  if (train.batch_size < 1) throw std::invalid_argument("cascade: batch_size must be >= 1");
}

Tensor sample_proposal_feature(const Tensor& encoded, const Proposal& p, double duration_seconds, double context_ratio,
                               std::size_t n_bins) {
  if (encoded.rank() != 2) throw std::invalid_argument("sample_proposal_feature: encoded must be [T x E]");
  if (!(p.t_end > p.t_start)) throw std::invalid_argument("sample_proposal_feature: zero-length proposal");
  if (n_bins < 2) throw std::invalid_argument("sample_proposal_feature: n_bins must be >= 2");
  const std::size_t steps = encoded.dim(0);
  const double cell = duration_seconds / static_cast<double>(steps);
  const double len = p.t_end - p.t_start;
  const double lo = (p.t_start - context_ratio * len) / cell;
  const double hi = (p.t_end + context_ratio * len) / cell;
  std::vector<RowTaps> taps(n_bins);
  for (std::size_t i = 0; i < n_bins; ++i) {
    const double pos = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_bins - 1);
    taps[i] = interpolation_taps(pos, steps);
  }
  return reshape(gather_rows(encoded, taps), {n_bins * encoded.dim(1)});
}

Proposal apply_stage_output(const Proposal& p, const StageOutput& out, double duration_seconds) {
  if (!std::isfinite(out.delta_start) || !std::isfinite(out.delta_end) || !std::isfinite(out.confidence_logit)) {
    throw std::domain_error("cascade stage produced non-finite outputs");
  }
  Proposal refined = p;
  const double len = p.t_end - p.t_start;
  const double s = std::clamp(p.t_start + out.delta_start * len, 0.0, duration_seconds);
  const double e = std::clamp(p.t_end + out.delta_end * len, 0.0, duration_seconds);
  if (s < e) {
    refined.t_start = s;
    refined.t_end = e;
  }
  const double multiplier = 2.0 / (1.0 + std::exp(-out.confidence_logit));
  refined.score = std::clamp(p.score * multiplier, 0.0, 1.0);
  return refined;
}

Tensor stage_head(const Tensor& features, const StageParams& params) {
  return linear(relu(linear(features, params.hidden)), params.output);
}

Proposal refine_stage(const Proposal& p, const Tensor& feature, const StageParams& params, double duration_seconds) {
  Tensor out = stage_head(reshape(feature, {1, feature.numel()}), params);
  return apply_stage_output(p, {out.at(0, 0), out.at(0, 1), out.at(0, 2)}, duration_seconds);
}

CascadeRefiner::CascadeRefiner(std::size_t encoded_width, const CascadeConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), encoded_width_(encoded_width) {
  cfg_.validate();
  Rng rng(seed);
  const std::size_t in_features = cfg_.n_bins * encoded_width;
  for (std::size_t k = 0; k < cfg_.n_stages; ++k) {
    stages_.push_back({make_linear(in_features, cfg_.hidden, rng), zero_linear(cfg_.hidden, 3)});
    const std::string prefix = "cascade.stage" + std::to_string(k);
    params_.add(prefix + ".hidden", stages_.back().hidden);
    params_.add(prefix + ".output", stages_.back().output);
  }
}

namespace {

Tensor proposal_features(const std::vector<Proposal>& proposals, const Tensor& encoded, double duration,
                         const CascadeConfig& cfg) {
  std::vector<Tensor> rows;
  rows.reserve(proposals.size());
  for (const auto& p : proposals) rows.push_back(sample_proposal_feature(encoded, p, duration, cfg.context_ratio, cfg.n_bins));
  return stack_rows(rows);
}

}  // namespace

std::vector<Proposal> CascadeRefiner::refine(const std::vector<Proposal>& proposals, const Tensor& encoded,
                                             double duration_seconds, std::size_t stage_count) const {
  if (stage_count > stages_.size()) throw std::invalid_argument("cascade: stage count exceeds configured stages");
  if (encoded.rank() != 2 || encoded.dim(1) != encoded_width_) {
    throw std::invalid_argument("cascade: encoded features " + shape_to_string(encoded.shape()) +
                                " do not match width " + std::to_string(encoded_width_));
  }
  NoGradGuard no_grad;
  std::vector<Proposal> current = proposals;
  if (current.empty()) return current;
  for (std::size_t k = 0; k < stage_count; ++k) {
    Tensor out = stage_head(proposal_features(current, encoded, duration_seconds, cfg_), stages_[k]);
    for (std::size_t i = 0; i < current.size(); ++i) {
      current[i] = apply_stage_output(current[i], {out.at(i, 0), out.at(i, 1), out.at(i, 2)}, duration_seconds);
    }
  }
  return current;
}

std::vector<Proposal> cascade_refine(const std::vector<Proposal>& proposals, const Tensor& encoded,
                                     double duration_seconds, const CascadeRefiner& refiner) {
  return refiner.refine(proposals, encoded, duration_seconds);
}

std::vector<CascadeTarget> make_cascade_targets(const std::vector<Proposal>& proposals,
                                                const std::vector<GroundTruth>& instances, double iou_floor) {
  std::vector<CascadeTarget> targets;
  targets.reserve(proposals.size());
  for (const auto& p : proposals) {
    CascadeTarget target;
    const GroundTruth* match = nullptr;
    for (const auto& gt : instances) {
      const double overlap = iou(p.segment(), gt.segment);
      if (overlap > target.iou) {
        target.iou = overlap;
        match = &gt;
      }
    }
    if (match && target.iou >= iou_floor) {
      const double len = p.t_end - p.t_start;
      target.delta_start = (match->segment.start - p.t_start) / len;
      target.delta_end = (match->segment.end - p.t_end) / len;
      target.positive = true;
    }
    targets.push_back(target);
  }
  return targets;
}

CascadeTrainLog train_cascade(CascadeRefiner& refiner, const std::vector<CascadeVideo>& data) {
  const auto& cfg = refiner.config();
  CascadeTrainLog log;
  std::vector<std::vector<Proposal>> current;
  for (const auto& v : data) current.push_back(v.proposals);

  for (std::size_t stage = 0; stage < cfg.n_stages; ++stage) {
    // Sample pool for this stage, built from the proposals refined so far.
    std::vector<std::vector<double>> features;
    std::vector<CascadeTarget> targets;
    {
      NoGradGuard no_grad;
      for (std::size_t v = 0; v < data.size(); ++v) {
        if (current[v].empty()) continue;
        Tensor f = proposal_features(current[v], data[v].encoded, data[v].duration_seconds, cfg);
        const std::size_t width = f.dim(1);
        for (std::size_t i = 0; i < current[v].size(); ++i) {
          features.emplace_back(f.data().begin() + static_cast<std::ptrdiff_t>(i * width),
                                f.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * width));
        }
        auto t = make_cascade_targets(current[v], data[v].instances, cfg.iou_floors[stage]);
        targets.insert(targets.end(), t.begin(), t.end());
      }
    }
    if (features.empty()) throw std::invalid_argument("train_cascade: empty proposal pool");

    auto& params = refiner.stages()[stage];
    ParameterSet stage_params;
    stage_params.add("hidden", params.hidden);
    stage_params.add("output", params.output);
    SgdMomentum opt(stage_params, cfg.train.learning_rate, cfg.train.momentum);
    const std::size_t width = features.front().size();
    std::vector<std::size_t> order(features.size());
    std::vector<double> epoch_losses;

    for (std::size_t epoch = 0; epoch < cfg.train.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), 0);
      Rng rng(mix_seed(cfg.train.seed, stage * 1000 + epoch));
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
      }
      double total = 0.0;
      std::size_t batches = 0;
      for (std::size_t begin = 0; begin < order.size(); begin += cfg.train.batch_size) {
        const std::size_t end = std::min(order.size(), begin + cfg.train.batch_size);
        const std::size_t batch = end - begin;
        std::vector<double> x;
        x.reserve(batch * width);
        std::vector<double> delta_targets(batch * 2, 0.0), reg_mask(batch * 2, 0.0), labels(batch, 0.0);
        std::size_t positives = 0;
        for (std::size_t k = 0; k < batch; ++k) {
          const auto idx = order[begin + k];
          x.insert(x.end(), features[idx].begin(), features[idx].end());
          const auto& t = targets[idx];
          if (t.positive) {
            ++positives;
            delta_targets[2 * k] = t.delta_start;
            delta_targets[2 * k + 1] = t.delta_end;
            reg_mask[2 * k] = reg_mask[2 * k + 1] = 1.0;
            labels[k] = 1.0;
          }
        }
        opt.zero_grad();
        Tensor out = stage_head(Tensor::from_data({batch, width}, std::move(x)), params);
        Tensor offsets = slice_cols(out, 0, 2);
        Tensor conf = reshape(sigmoid(slice_cols(out, 2, 3)), {batch});
        const double reg_norm = 1.0 / static_cast<double>(std::max<std::size_t>(1, positives));
        Tensor reg_loss = scale(sum(mul(smooth_l1(sub(offsets, Tensor::from_data({batch, 2}, delta_targets)), 0.1),
                                        Tensor::from_data({batch, 2}, reg_mask))),
                                reg_norm);
        Tensor loss = add(reg_loss, balanced_bce(conf, labels));
        if (!std::isfinite(loss.item())) {
          throw TrainingDiverged("cascade stage " + std::to_string(stage) + " diverged at epoch " +
                                     std::to_string(epoch + 1),
                                 epoch + 1);
        }
        loss.backward();
        opt.clip_grad_norm(cfg.train.grad_clip);
        opt.step();
        total += loss.item();
        ++batches;
      }
      epoch_losses.push_back(total / static_cast<double>(batches));
    }
    log.stage_loss.push_back(std::move(epoch_losses));

    for (std::size_t v = 0; v < data.size(); ++v) {
      if (current[v].empty()) continue;
      current[v] = refiner.refine(data[v].proposals, data[v].encoded, data[v].duration_seconds, stage + 1);
    }
  }
  return log;
}

}  // namespace talforge
