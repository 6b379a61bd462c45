#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "talforge/evaluation.hpp"
#include "talforge/proposal_net.hpp"
#include "talforge/types.hpp"

namespace talforge {

// ---- annotations (ActivityNet-1.3 "database" schema) ----

AnnotationSet parse_annotations(const nlohmann::json& doc);
nlohmann::json annotations_to_json(const AnnotationSet& set);
AnnotationSet load_annotations(const std::filesystem::path& path);
void save_annotations(const std::filesystem::path& path, const AnnotationSet& set);

// ---- features ----
//
// "TALF" layout: magic | u32 version (1) | u32 T | u32 D | T*D float32 LE,
// row-major. Values are promoted to double on load.
inline constexpr std::uint32_t kFeatureVersion = 1;

std::vector<std::uint8_t> encode_features(const Tensor& features);
Tensor decode_features(const std::vector<std::uint8_t>& bytes);
Tensor parse_feature_csv(const std::string& text);
std::string feature_csv(const Tensor& features);

/// Dispatches on extension: ".csv" is text, anything else is TALF.
Tensor load_features(const std::filesystem::path& path);
void save_features(const std::filesystem::path& path, const Tensor& features);

// ---- video-level class scores ----
// {"results": {video_id: [{"label": str, "score": real}, ...]}}

ClassScoreSet parse_class_scores(const nlohmann::json& doc);
nlohmann::json class_scores_to_json(const ClassScoreSet& scores);
ClassScoreSet load_class_scores(const std::filesystem::path& path);
void save_class_scores(const std::filesystem::path& path, const ClassScoreSet& scores);

// ---- proposals and detections (ActivityNet submission schema) ----

nlohmann::json proposals_to_json(const ProposalSet& proposals);
ProposalSet parse_proposals(const nlohmann::json& doc);
void write_proposals(const ProposalSet& proposals, const std::filesystem::path& path);
ProposalSet load_proposals(const std::filesystem::path& path);

nlohmann::json detections_to_json(const std::vector<Detection>& detections);
std::vector<Detection> parse_detections(const nlohmann::json& doc);
void write_results(const std::vector<Detection>& detections, const std::filesystem::path& path);
std::vector<Detection> load_results(const std::filesystem::path& path);

// ---- reports and dumps ----

/// Threshold keys are rendered with two decimals ("0.50").
std::string threshold_key(double thr);
nlohmann::json metrics_to_json(const MapReport& report);
/// One CSV per (class, threshold): columns recall,precision.
void write_pr_curves(const MapReport& report, const std::filesystem::path& dir);
nlohmann::json video_dump_json(const BoundaryProbabilityPair& probs, const BMConfidenceMap& map);

/// Deterministic JSON text (sorted keys, 2-space indent, trailing newline).
std::string dump_json(const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace talforge
