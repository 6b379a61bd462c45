#include "talforge/io.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "talforge/binary.hpp"

namespace talforge {

using nlohmann::json;

namespace {

[[noreturn]] void schema_error(const std::string& where, const std::string& what) {
  throw std::runtime_error(where + ": " + what);
}

double require_number(const json& j, const std::string& where) {
  if (!j.is_number()) schema_error(where, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) schema_error(where, "non-finite number");
  return v;
}

Segment parse_segment(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2) schema_error(where, "segment must be a [start, end] pair");
  return {require_number(j[0], where), require_number(j[1], where)};
}

}  // namespace

std::vector<std::string> AnnotationSet::video_ids(const std::string& subset) const {
  std::vector<std::string> ids;
  for (const auto& [id, ann] : videos) {
    if (subset.empty() || ann.subset == subset) ids.push_back(id);
  }
  return ids;
}

AnnotationSet parse_annotations(const json& doc) {
  if (!doc.is_object() || !doc.contains("database") || !doc["database"].is_object()) {
    schema_error("annotations", "missing \"database\" object");
  }
  AnnotationSet set;
  for (const auto& [id, entry] : doc["database"].items()) {
    const std::string where = "video " + id;
    if (!entry.is_object()) schema_error(where, "entry must be an object");
    VideoAnnotation ann;
    if (!entry.contains("duration")) schema_error(where, "missing duration");
    ann.duration_seconds = require_number(entry["duration"], where + " duration");
    if (!(ann.duration_seconds > 0)) schema_error(where, "duration must be positive");
    if (entry.contains("subset")) {
      if (!entry["subset"].is_string()) schema_error(where, "subset must be a string");
      ann.subset = entry["subset"].get<std::string>();
    }
    if (entry.contains("annotations")) {
      const auto& list = entry["annotations"];
      if (!list.is_array()) schema_error(where, "annotations must be an array");
      for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string at = where + " annotation " + std::to_string(i);
        const auto& a = list[i];
        if (!a.is_object() || !a.contains("label") || !a["label"].is_string() || !a.contains("segment")) {
          schema_error(at, "expected {\"label\": str, \"segment\": [s, e]}");
        }
        GroundTruth gt{a["label"].get<std::string>(), parse_segment(a["segment"], at)};
        if (gt.label.empty()) schema_error(at, "empty label");
        if (!(gt.segment.end > gt.segment.start)) schema_error(at, "end before start");
        if (gt.segment.start < 0 || gt.segment.end > ann.duration_seconds) {
          schema_error(at, "segment outside [0, duration]");
        }
        ann.instances.push_back(std::move(gt));
      }
    }
    set.videos.emplace(id, std::move(ann));
  }
  return set;
}

json annotations_to_json(const AnnotationSet& set) {
  json db = json::object();
  for (const auto& [id, ann] : set.videos) {
    json list = json::array();
    for (const auto& gt : ann.instances) {
      list.push_back({{"label", gt.label}, {"segment", {gt.segment.start, gt.segment.end}}});
    }
    db[id] = {{"duration", ann.duration_seconds}, {"subset", ann.subset}, {"annotations", list}};
  }
  return {{"version", "VERSION 1.3"}, {"database", db}};
}

AnnotationSet load_annotations(const std::filesystem::path& path) { return parse_annotations(read_json(path)); }

void save_annotations(const std::filesystem::path& path, const AnnotationSet& set) {
  write_json(path, annotations_to_json(set));
}

std::vector<std::uint8_t> encode_features(const Tensor& features) {
  if (features.rank() != 2) throw std::invalid_argument("features must be [T x D]");
  std::vector<std::uint8_t> out{'T', 'A', 'L', 'F'};
  binary::put_u32(out, kFeatureVersion);
  binary::put_u32(out, static_cast<std::uint32_t>(features.dim(0)));
  binary::put_u32(out, static_cast<std::uint32_t>(features.dim(1)));
  for (double v : features.data()) {
    if (!std::isfinite(v)) throw std::invalid_argument("features contain non-finite values");
    binary::put_f32(out, static_cast<float>(v));
  }
  return out;
}

Tensor decode_features(const std::vector<std::uint8_t>& bytes) {
  binary::Reader in(bytes);
  if (in.remaining() < 4 || in.str(4) != "TALF") throw std::runtime_error("bad magic: not a TALF feature file");
  const auto version = in.u32();
  if (version != kFeatureVersion) throw std::runtime_error("unsupported TALF version " + std::to_string(version));
  const std::size_t steps = in.u32();
  const std::size_t dim = in.u32();
  if (steps == 0 || dim == 0) throw std::runtime_error("TALF file declares an empty matrix");
  in.require(steps * dim * 4);
  std::vector<double> values(steps * dim);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float v = in.f32();
    if (!std::isfinite(v)) throw std::runtime_error("non-finite feature value at element " + std::to_string(i));
    values[i] = v;
  }
  if (!in.at_end()) throw std::runtime_error("trailing bytes after TALF payload");
  return Tensor::from_data({steps, dim}, std::move(values));
}

Tensor parse_feature_csv(const std::string& text) {
  std::istringstream lines(text);
  std::string line;
  std::vector<double> values;
  std::size_t rows = 0, cols = 0;
  while (std::getline(lines, line)) {
    if (line.empty() || line == "\r") continue;
    std::istringstream cells(line);
    std::string cell;
    std::size_t count = 0;
    while (std::getline(cells, cell, ',')) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw std::runtime_error("feature CSV row " + std::to_string(rows) + ": not a number: " + cell);
      }
      if (!std::isfinite(v)) throw std::runtime_error("feature CSV row " + std::to_string(rows) + ": non-finite value");
      values.push_back(v);
      ++count;
    }
    if (rows == 0) cols = count;
    if (count != cols) throw std::runtime_error("feature CSV row " + std::to_string(rows) + " has inconsistent width");
    ++rows;
  }
  if (rows == 0 || cols == 0) throw std::runtime_error("feature CSV is empty");
  return Tensor::from_data({rows, cols}, std::move(values));
}

std::string feature_csv(const Tensor& features) {
  std::ostringstream os;
  os.precision(9);
  const auto rows = features.dim(0), cols = features.dim(1);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) os << (j ? "," : "") << features.at(i, j);
    os << '\n';
  }
  return os.str();
}

Tensor load_features(const std::filesystem::path& path) {
  if (path.extension() == ".csv") return parse_feature_csv(binary::read_text(path));
  return decode_features(binary::read_file(path));
}

void save_features(const std::filesystem::path& path, const Tensor& features) {
  if (path.extension() == ".csv") {
    binary::write_text(path, feature_csv(features));
  } else {
    binary::write_file(path, encode_features(features));
  }
}

ClassScoreSet parse_class_scores(const json& doc) {
  if (!doc.is_object() || !doc.contains("results") || !doc["results"].is_object()) {
    schema_error("class scores", "missing \"results\" object");
  }
  ClassScoreSet set;
  for (const auto& [id, list] : doc["results"].items()) {
    const std::string where = "class scores for " + id;
    if (!list.is_array()) schema_error(where, "expected an array of {label, score}");
    VideoClassScores scores{id, {}};
    for (const auto& item : list) {
      if (!item.is_object() || !item.contains("label") || !item["label"].is_string()) schema_error(where, "missing label");
      scores.scores[item["label"].get<std::string>()] = require_number(item.value("score", json()), where);
    }
    if (scores.scores.empty()) schema_error(where, "no classes");
    set.emplace(id, std::move(scores));
  }
  return set;
}

json class_scores_to_json(const ClassScoreSet& scores) {
  json results = json::object();
  for (const auto& [id, s] : scores) {
    json list = json::array();
    for (const auto& [label, score] : s.scores) list.push_back({{"label", label}, {"score", score}});
    results[id] = list;
  }
  return {{"version", "VERSION 1.3"}, {"results", results}};
}

ClassScoreSet load_class_scores(const std::filesystem::path& path) { return parse_class_scores(read_json(path)); }

void save_class_scores(const std::filesystem::path& path, const ClassScoreSet& scores) {
  write_json(path, class_scores_to_json(scores));
}

json proposals_to_json(const ProposalSet& proposals) {
  json results = json::object();
  for (const auto& [id, list] : proposals) {
    json items = json::array();
    for (const auto& p : list) {
      items.push_back({{"segment", {p.t_start, p.t_end}}, {"score", p.score}, {"provenance", p.provenance}});
    }
    results[id] = items;
  }
  return {{"version", "VERSION 1.3"}, {"results", results}, {"external_data", json::object()}};
}

ProposalSet parse_proposals(const json& doc) {
  if (!doc.is_object() || !doc.contains("results") || !doc["results"].is_object()) {
    schema_error("proposals", "missing \"results\" object");
  }
  ProposalSet set;
  for (const auto& [id, list] : doc["results"].items()) {
    if (!list.is_array()) schema_error("proposals for " + id, "expected an array");
    auto& dst = set[id];
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string where = "proposal " + std::to_string(i) + " of " + id;
      const auto& item = list[i];
      if (!item.is_object() || !item.contains("segment") || !item.contains("score")) {
        schema_error(where, "expected {segment, score}");
      }
      const Segment seg = parse_segment(item["segment"], where);
      if (!(seg.end > seg.start)) schema_error(where, "end before start");
      dst.push_back({seg.start, seg.end, require_number(item["score"], where), item.value("provenance", std::string())});
    }
  }
  return set;
}

void write_proposals(const ProposalSet& proposals, const std::filesystem::path& path) {
  write_json(path, proposals_to_json(proposals));
}

ProposalSet load_proposals(const std::filesystem::path& path) { return parse_proposals(read_json(path)); }

json detections_to_json(const std::vector<Detection>& detections) {
  json results = json::object();
  for (const auto& d : detections) {
    if (!results.contains(d.video_id)) results[d.video_id] = json::array();
    results[d.video_id].push_back({{"label", d.label},
                                   {"score", d.score},
                                   {"segment", {d.proposal.t_start, d.proposal.t_end}},
                                   {"proposal_score", d.proposal.score},
                                   {"provenance", d.proposal.provenance}});
  }
  return {{"version", "VERSION 1.3"}, {"results", results}, {"external_data", json::object()}};
}

std::vector<Detection> parse_detections(const json& doc) {
  if (!doc.is_object() || !doc.contains("results") || !doc["results"].is_object()) {
    schema_error("detections", "missing \"results\" object");
  }
  std::vector<Detection> out;
  for (const auto& [id, list] : doc["results"].items()) {
    if (!list.is_array()) schema_error("detections for " + id, "expected an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string where = "detection " + std::to_string(i) + " of " + id;
      const auto& item = list[i];
      if (!item.is_object() || !item.contains("label") || !item["label"].is_string() || !item.contains("segment") ||
          !item.contains("score")) {
        schema_error(where, "expected {label, score, segment}");
      }
      Detection d;
      d.video_id = id;
      d.label = item["label"].get<std::string>();
      d.score = require_number(item["score"], where);
      const Segment seg = parse_segment(item["segment"], where);
      if (!(seg.end > seg.start)) schema_error(where, "end before start");
      d.proposal = {seg.start, seg.end, item.contains("proposal_score") ? require_number(item["proposal_score"], where) : d.score,
                    item.value("provenance", std::string())};
      out.push_back(std::move(d));
    }
  }
  return out;
}

void write_results(const std::vector<Detection>& detections, const std::filesystem::path& path) {
  write_json(path, detections_to_json(detections));
}

std::vector<Detection> load_results(const std::filesystem::path& path) { return parse_detections(read_json(path)); }

std::string threshold_key(double thr) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", thr);
  return buf;
}

json metrics_to_json(const MapReport& report) {
  json per_thr = json::object();
  for (const auto& [thr, m] : report.per_threshold) per_thr[threshold_key(thr)] = m;
  json per_class = json::object();
  for (const auto& [label, aps] : report.per_class) {
    json entry = json::object();
    double total = 0.0;
    for (const auto& [thr, ap] : aps) {
      entry[threshold_key(thr)] = ap;
      total += ap;
    }
    entry["average"] = aps.empty() ? 0.0 : total / static_cast<double>(aps.size());
    per_class[label] = entry;
  }
  return {{"per_threshold", per_thr}, {"average_mAP", report.average_map}, {"per_class", per_class}};
}

void write_pr_curves(const MapReport& report, const std::filesystem::path& dir) {
  for (const auto& [label, curves] : report.curves) {
    for (const auto& [thr, curve] : curves) {
      std::ostringstream os;
      os.precision(17);
      os << "recall,precision\n";
      for (std::size_t i = 0; i < curve.recall.size(); ++i) os << curve.recall[i] << ',' << curve.precision[i] << '\n';
      binary::write_text(dir / (label + "_" + threshold_key(thr) + ".csv"), os.str());
    }
  }
}

json video_dump_json(const BoundaryProbabilityPair& probs, const BMConfidenceMap& map) {
  json cls = json::array(), reg = json::array();
  for (std::size_t d = 0; d < map.max_duration(); ++d) {
    json cls_row = json::array(), reg_row = json::array();
    for (std::size_t t = 0; t < map.temporal_scale(); ++t) {
      const bool ok = map.valid(d, t);
      cls_row.push_back(ok ? json(map.cls(d, t)) : json(nullptr));
      reg_row.push_back(ok ? json(map.reg(d, t)) : json(nullptr));
    }
    cls.push_back(cls_row);
    reg.push_back(reg_row);
  }
  return {{"start_probs", probs.start_probs}, {"end_probs", probs.end_probs}, {"cls_conf", cls}, {"reg_conf", reg}};
}

std::string dump_json(const json& doc) { return doc.dump(2) + "\n"; }

json read_json(const std::filesystem::path& path) {
  const std::string text = binary::read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& doc) { binary::write_text(path, dump_json(doc)); }

}  // namespace talforge
