#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "talforge/proposal_net.hpp"
#include "talforge/types.hpp"

namespace talforge {

struct Candidate {
  std::size_t start_index = 0;
  std::size_t end_index = 0;
  double start_prob = 0.0;
  double end_prob = 0.0;

  bool operator==(const Candidate&) const = default;
};

/// Index t is a boundary candidate when its probability is a strict local
/// maximum (edge indices compare against their single neighbour) or exceeds
/// half of the sequence maximum. Emits every start/end pair with
/// 0 < end - start <= max_duration, ordered by (start, end).
std::vector<Candidate> generate_candidates(const BoundaryProbabilityPair& probs, std::size_t max_duration);

/// score = p_start * p_end * cls(d, t) * reg(d, t) with d = e - s - 1, t = s.
/// Grid index i maps to i * duration / T seconds.
std::vector<Proposal> fuse_scores(const std::vector<Candidate>& candidates, const BMConfidenceMap& map,
                                  double duration_seconds, const std::string& provenance = "pnet");

enum class NmsMethod { kGaussian, kLinear };

struct SoftNmsConfig {
  NmsMethod method = NmsMethod::kGaussian;
  double sigma = 0.4;
  std::size_t keep_top = 100;
  double linear_threshold = 0.5;

  void validate() const;
};

/// Repeatedly selects the highest-scoring remaining proposal (earliest input
/// index on ties) and decays the rest: exp(-iou^2 / sigma) for gaussian,
/// (1 - iou) when iou > linear_threshold for linear. Returns at most
/// keep_top proposals in selection order.
std::vector<Proposal> soft_nms(const std::vector<Proposal>& proposals, const SoftNmsConfig& cfg);

struct WeightedResults {
  double weight = 1.0;
  ProposalSet proposals;
};

/// Per video: concatenates every set's proposals with scores scaled by
/// weight / max(weights), then applies soft_nms.
ProposalSet ensemble(const std::vector<WeightedResults>& sets, const SoftNmsConfig& cfg);

/// One detection per (proposal, top-k class) with score = proposal score x
/// class score.
std::vector<Detection> assign_classes(const std::string& video_id, const std::vector<Proposal>& proposals,
                                      const VideoClassScores& classes, std::size_t top_k);

}  // namespace talforge
