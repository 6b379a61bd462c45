#include "talforge/config.hpp"

#include <stdexcept>

#include "talforge/io.hpp"

namespace talforge {

using nlohmann::json;

PipelineConfig PipelineConfig::toy() { return PipelineConfig{}; }

PipelineConfig PipelineConfig::full() {
  PipelineConfig cfg;
  cfg.model.temporal_scale = 100;
  cfg.model.max_duration = 100;
  cfg.model.num_samples = 32;
  cfg.model.encoder_width = 128;
  cfg.model.head_width = 128;
  cfg.model.map_hidden = 128;
  cfg.model.lstm_hidden = 64;
  return cfg;
}

void PipelineConfig::validate() const {
  model.validate();
  if (model.feature_dim != synthetic.feature_dim) {
    throw std::invalid_argument("model.feature_dim must equal synthetic.feature_dim");
  }
  if (!(loss.lambda_cls >= 0) || !(loss.lambda_reg >= 0)) throw std::invalid_argument("loss weights must be >= 0");
  for (const TrainConfig* t : {&train, &cascade.train}) {
    if (!(t->learning_rate >= 0)) throw std::invalid_argument("learning rate must be >= 0");
    if (!(t->momentum >= 0 && t->momentum < 1)) throw std::invalid_argument("momentum must lie in [0, 1)");
    if (t->batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (!(t->grad_clip >= 0)) throw std::invalid_argument("grad_clip must be >= 0");
  }
  cascade.validate();
  postprocess.nms.validate();
  if (postprocess.top_k < 1) throw std::invalid_argument("postprocess.top_k must be >= 1");
  for (double w : postprocess.ensemble_weights) {
    if (!(w > 0)) throw std::invalid_argument("postprocess.ensemble_weights must be positive");
  }
  eval.validate();
  synthetic.validate();
}

namespace {

json train_to_json(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate}, {"momentum", t.momentum}, {"epochs", t.epochs},
          {"batch_size", t.batch_size},       {"grad_clip", t.grad_clip}, {"seed", t.seed}};
}

TrainConfig train_from_json(const json& j) {
  TrainConfig t;
  t.learning_rate = j.at("learning_rate").get<double>();
  t.momentum = j.at("momentum").get<double>();
  t.epochs = j.at("epochs").get<std::size_t>();
  t.batch_size = j.at("batch_size").get<std::size_t>();
  t.grad_clip = j.at("grad_clip").get<double>();
  t.seed = j.at("seed").get<std::uint64_t>();
  return t;
}

void reject_unknown_keys(const json& given, const json& known, const std::string& path) {
  if (!given.is_object()) return;
  for (const auto& [key, value] : given.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!known.contains(key)) throw std::invalid_argument("unknown config key: " + here);
    if (value.is_object() && known[key].is_object()) reject_unknown_keys(value, known[key], here);
  }
}

std::string method_name(NmsMethod m) { return m == NmsMethod::kGaussian ? "gaussian" : "linear"; }

NmsMethod method_from_name(const std::string& s) {
  if (s == "gaussian") return NmsMethod::kGaussian;
  if (s == "linear") return NmsMethod::kLinear;
  throw std::invalid_argument("postprocess.method must be \"gaussian\" or \"linear\", got \"" + s + "\"");
}

}  // namespace

json config_to_json(const PipelineConfig& cfg) {
  const auto& m = cfg.model;
  const auto& c = cfg.cascade;
  const auto& p = cfg.postprocess;
  const auto& s = cfg.synthetic;
  return {
      {"model",
       {{"temporal_scale", m.temporal_scale},
        {"max_duration", m.max_duration},
        {"num_samples", m.num_samples},
        {"feature_dim", m.feature_dim},
        {"lstm_hidden", m.lstm_hidden},
        {"encoder_width", m.encoder_width},
        {"encoder_layers", m.encoder_layers},
        {"head_width", m.head_width},
        {"map_hidden", m.map_hidden}}},
      {"loss", {{"lambda_cls", cfg.loss.lambda_cls}, {"lambda_reg", cfg.loss.lambda_reg}}},
      {"train", train_to_json(cfg.train)},
      {"cascade",
       {{"n_stages", c.n_stages},
        {"iou_floors", c.iou_floors},
        {"context_ratio", c.context_ratio},
        {"n_bins", c.n_bins},
        {"hidden", c.hidden},
        {"max_proposals", c.max_proposals},
        {"train", train_to_json(c.train)}}},
      {"postprocess",
       {{"method", method_name(p.nms.method)},
        {"sigma", p.nms.sigma},
        {"keep_top", p.nms.keep_top},
        {"linear_threshold", p.nms.linear_threshold},
        {"top_k", p.top_k},
        {"ensemble_weights", p.ensemble_weights}}},
      {"eval", {{"iou_thresholds", cfg.eval.iou_thresholds}}},
      {"synthetic",
       {{"n_videos", s.n_videos},
        {"n_validation", s.n_validation},
        {"duration_min", s.duration_min},
        {"duration_max", s.duration_max},
        {"instances_min", s.instances_min},
        {"instances_max", s.instances_max},
        {"instance_fraction_min", s.instance_fraction_min},
        {"instance_fraction_max", s.instance_fraction_max},
        {"n_classes", s.n_classes},
        {"feature_dim", s.feature_dim},
        {"snippets_min", s.snippets_min},
        {"snippets_max", s.snippets_max},
        {"noise", s.noise},
        {"absent_class_score", s.absent_class_score},
        {"seed", s.seed}}},
      {"paths", {{"data_dir", cfg.paths.data_dir}, {"work_dir", cfg.paths.work_dir}}},
  };
}

PipelineConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw std::invalid_argument("config must be a JSON object");
  json merged = config_to_json(PipelineConfig::toy());
  reject_unknown_keys(doc, merged, "");
  merged.merge_patch(doc);

  PipelineConfig cfg;
  try {
    const auto& m = merged.at("model");
    cfg.model.temporal_scale = m.at("temporal_scale").get<std::size_t>();
    cfg.model.max_duration = m.at("max_duration").get<std::size_t>();
    cfg.model.num_samples = m.at("num_samples").get<std::size_t>();
    cfg.model.feature_dim = m.at("feature_dim").get<std::size_t>();
    cfg.model.lstm_hidden = m.at("lstm_hidden").get<std::size_t>();
    cfg.model.encoder_width = m.at("encoder_width").get<std::size_t>();
    cfg.model.encoder_layers = m.at("encoder_layers").get<std::size_t>();
    cfg.model.head_width = m.at("head_width").get<std::size_t>();
    cfg.model.map_hidden = m.at("map_hidden").get<std::size_t>();

    cfg.loss.lambda_cls = merged.at("loss").at("lambda_cls").get<double>();
    cfg.loss.lambda_reg = merged.at("loss").at("lambda_reg").get<double>();
    cfg.train = train_from_json(merged.at("train"));

    const auto& c = merged.at("cascade");
    cfg.cascade.n_stages = c.at("n_stages").get<std::size_t>();
    cfg.cascade.iou_floors = c.at("iou_floors").get<std::vector<double>>();
    cfg.cascade.context_ratio = c.at("context_ratio").get<double>();
    cfg.cascade.n_bins = c.at("n_bins").get<std::size_t>();
    cfg.cascade.hidden = c.at("hidden").get<std::size_t>();
    cfg.cascade.max_proposals = c.at("max_proposals").get<std::size_t>();
    cfg.cascade.train = train_from_json(c.at("train"));

    const auto& p = merged.at("postprocess");
    cfg.postprocess.nms.method = method_from_name(p.at("method").get<std::string>());
    cfg.postprocess.nms.sigma = p.at("sigma").get<double>();
    cfg.postprocess.nms.keep_top = p.at("keep_top").get<std::size_t>();
    cfg.postprocess.nms.linear_threshold = p.at("linear_threshold").get<double>();
    cfg.postprocess.top_k = p.at("top_k").get<std::size_t>();
    cfg.postprocess.ensemble_weights = p.at("ensemble_weights").get<std::vector<double>>();

    cfg.eval.iou_thresholds = merged.at("eval").at("iou_thresholds").get<std::vector<double>>();

    const auto& s = merged.at("synthetic");
    cfg.synthetic.n_videos = s.at("n_videos").get<std::size_t>();
    cfg.synthetic.n_validation = s.at("n_validation").get<std::size_t>();
    cfg.synthetic.duration_min = s.at("duration_min").get<double>();
    cfg.synthetic.duration_max = s.at("duration_max").get<double>();
    cfg.synthetic.instances_min = s.at("instances_min").get<std::size_t>();
    cfg.synthetic.instances_max = s.at("instances_max").get<std::size_t>();
    cfg.synthetic.instance_fraction_min = s.at("instance_fraction_min").get<double>();
    cfg.synthetic.instance_fraction_max = s.at("instance_fraction_max").get<double>();
    cfg.synthetic.n_classes = s.at("n_classes").get<std::size_t>();
    cfg.synthetic.feature_dim = s.at("feature_dim").get<std::size_t>();
    cfg.synthetic.snippets_min = s.at("snippets_min").get<std::size_t>();
    cfg.synthetic.snippets_max = s.at("snippets_max").get<std::size_t>();
    cfg.synthetic.noise = s.at("noise").get<double>();
    cfg.synthetic.absent_class_score = s.at("absent_class_score").get<double>();
    cfg.synthetic.seed = s.at("seed").get<std::uint64_t>();

    cfg.paths.data_dir = merged.at("paths").at("data_dir").get<std::string>();
    cfg.paths.work_dir = merged.at("paths").at("work_dir").get<std::string>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config type error: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw std::invalid_argument("config file not found: " + path.string());
  return config_from_json(read_json(path));
}

void apply_overrides(PipelineConfig& cfg, const std::vector<std::string>& assignments) {
  json doc = config_to_json(cfg);
  for (const auto& assignment : assignments) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw std::invalid_argument("override must look like section.key=value, got \"" + assignment + "\"");
    }
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::parse_error&) {
      value = raw;
    }
    std::string pointer = "/" + key;
    for (auto& ch : pointer) {
      if (ch == '.') ch = '/';
    }
    const json::json_pointer ptr(pointer);
    if (!doc.contains(ptr)) throw std::invalid_argument("unknown config key: " + key);
    doc[ptr] = value;
  }
  cfg = config_from_json(doc);
}

void apply_override(PipelineConfig& cfg, const std::string& assignment) { apply_overrides(cfg, {assignment}); }

}  // namespace talforge
