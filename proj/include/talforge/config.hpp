#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "talforge/cascade.hpp"
#include "talforge/evaluation.hpp"
#include "talforge/postprocess.hpp"
#include "talforge/proposal_net.hpp"
#include "talforge/synthetic.hpp"

namespace talforge {

struct PostprocessConfig {
  SoftNmsConfig nms;
  std::size_t top_k = 2;
  /// Empty means uniform weights.
  std::vector<double> ensemble_weights;
};

struct PathsConfig {
  std::string data_dir;
  std::string work_dir;
};

/// Every free parameter of the pipeline. Defaults are the toy-scale setup.
struct PipelineConfig {
  ProposalNetConfig model;
  LossConfig loss;
  TrainConfig train;
  CascadeConfig cascade;
  PostprocessConfig postprocess;
  EvalConfig eval;
  SyntheticSpec synthetic;
  PathsConfig paths;

  static PipelineConfig toy();
  static PipelineConfig full();

  /// Checks every field against the owning module's preconditions.
  void validate() const;
};

nlohmann::json config_to_json(const PipelineConfig& cfg);
/// Missing keys keep their toy defaults; unknown keys are rejected.
PipelineConfig config_from_json(const nlohmann::json& doc);
PipelineConfig load_config(const std::filesystem::path& path);

/// Applies "section.key=value" (value parsed as JSON, falling back to a
/// plain string) and re-validates.
void apply_override(PipelineConfig& cfg, const std::string& assignment);

/// Applies every assignment, then validates once, so interdependent fields
/// can change together.
void apply_overrides(PipelineConfig& cfg, const std::vector<std::string>& assignments);

}  // namespace talforge
