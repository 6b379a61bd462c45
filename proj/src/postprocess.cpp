#include "talforge/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "talforge/evaluation.hpp"

namespace talforge {

namespace {

std::vector<bool> boundary_candidates(const std::vector<double>& p) {
  const std::size_t n = p.size();
  std::vector<bool> keep(n, false);
  const double peak = *std::max_element(p.begin(), p.end());
  for (std::size_t t = 0; t < n; ++t) {
    const bool above_left = t == 0 || p[t] > p[t - 1];
    const bool above_right = t + 1 == n || p[t] > p[t + 1];
    keep[t] = (above_left && above_right) || p[t] > 0.5 * peak;
  }
  return keep;
}

}  // namespace

std::vector<Candidate> generate_candidates(const BoundaryProbabilityPair& probs, std::size_t max_duration) {
  const std::size_t n = probs.start_probs.size();
  if (n < 2 || probs.end_probs.size() != n) {
    throw std::invalid_argument("generate_candidates: need matching start/end sequences of length >= 2");
  }
  const auto starts = boundary_candidates(probs.start_probs);
  const auto ends = boundary_candidates(probs.end_probs);
  std::vector<Candidate> out;
  for (std::size_t s = 0; s < n; ++s) {
    if (!starts[s]) continue;
    for (std::size_t e = s + 1; e < n && e - s <= max_duration; ++e) {
      if (ends[e]) out.push_back({s, e, probs.start_probs[s], probs.end_probs[e]});
    }
  }
  return out;
}

std::vector<Proposal> fuse_scores(const std::vector<Candidate>& candidates, const BMConfidenceMap& map,
                                  double duration_seconds, const std::string& provenance) {
  const double cell = duration_seconds / static_cast<double>(map.temporal_scale());
  std::vector<Proposal> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) {
    if (c.end_index <= c.start_index) throw std::invalid_argument("fuse_scores: candidate end precedes start");
    const std::size_t d = c.end_index - c.start_index - 1;
    const double score = c.start_prob * c.end_prob * map.cls(d, c.start_index) * map.reg(d, c.start_index);
    out.push_back({static_cast<double>(c.start_index) * cell, static_cast<double>(c.end_index) * cell, score, provenance});
  }
  return out;
}

void SoftNmsConfig::validate() const {
  if (method == NmsMethod::kGaussian && !(sigma > 0)) throw std::invalid_argument("soft_nms: sigma must be > 0");
  if (method == NmsMethod::kLinear && !(linear_threshold >= 0 && linear_threshold <= 1)) {
    throw std::invalid_argument("soft_nms: linear threshold must lie in [0, 1]");
  }
  if (keep_top == 0) throw std::invalid_argument("soft_nms: keep_top must be >= 1");
}

std::vector<Proposal> soft_nms(const std::vector<Proposal>& proposals, const SoftNmsConfig& cfg) {
  cfg.validate();
  std::vector<Proposal> remaining = proposals;
  std::vector<Proposal> kept;
  while (!remaining.empty() && kept.size() < cfg.keep_top) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < remaining.size(); ++i) {
      if (remaining[i].score > remaining[best].score) best = i;
    }
    kept.push_back(remaining[best]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best));
    const Segment chosen = kept.back().segment();
    for (auto& p : remaining) {
      const double overlap = iou(chosen, p.segment());
      if (cfg.method == NmsMethod::kGaussian) {
        p.score *= std::exp(-overlap * overlap / cfg.sigma);
      } else if (overlap > cfg.linear_threshold) {
        p.score *= 1.0 - overlap;
      }
    }
  }
  return kept;
}

ProposalSet ensemble(const std::vector<WeightedResults>& sets, const SoftNmsConfig& cfg) {
  if (sets.empty()) throw std::invalid_argument("ensemble: at least one result set is required");
  double max_weight = 0.0;
  for (const auto& s : sets) {
    if (!(s.weight > 0) || !std::isfinite(s.weight)) throw std::invalid_argument("ensemble: weights must be positive");
    max_weight = std::max(max_weight, s.weight);
  }
  ProposalSet pooled;
  for (const auto& s : sets) {
    const double factor = s.weight / max_weight;
    for (const auto& [video, list] : s.proposals) {
      auto& dst = pooled[video];
      for (auto p : list) {
        p.score *= factor;
        dst.push_back(std::move(p));
      }
    }
  }
  ProposalSet out;
  for (auto& [video, list] : pooled) out[video] = soft_nms(list, cfg);
  return out;
}

std::vector<Detection> assign_classes(const std::string& video_id, const std::vector<Proposal>& proposals,
                                      const VideoClassScores& classes, std::size_t top_k) {
  if (classes.scores.empty()) throw std::invalid_argument("assign_classes: empty class score map for " + video_id);
  if (top_k == 0) throw std::invalid_argument("assign_classes: top_k must be >= 1");
  std::vector<std::pair<std::string, double>> ranked(classes.scores.begin(), classes.scores.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  ranked.resize(std::min(ranked.size(), top_k));
  std::vector<Detection> out;
  out.reserve(proposals.size() * ranked.size());
  for (const auto& p : proposals) {
    for (const auto& [label, cls_score] : ranked) out.push_back({video_id, p, label, p.score * cls_score});
  }
  return out;
}

}  // namespace talforge
