#include "talforge/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "talforge/io.hpp"
#include "talforge/rng.hpp"

namespace talforge {

void SyntheticSpec::validate() const {
  if (n_videos == 0) throw std::invalid_argument("synthetic: n_videos must be >= 1");
  if (n_validation > n_videos) throw std::invalid_argument("synthetic: n_validation exceeds n_videos");
  if (!(duration_min > 0) || duration_max < duration_min) throw std::invalid_argument("synthetic: bad duration range");
  if (instances_max < instances_min) throw std::invalid_argument("synthetic: bad instance count range");
  if (!(instance_fraction_min > 0) || instance_fraction_max < instance_fraction_min || instance_fraction_max >= 0.95) {
    throw std::invalid_argument("synthetic: bad instance length range");
  }
  if (n_classes == 0) throw std::invalid_argument("synthetic: n_classes must be >= 1");
  if (feature_dim < n_classes + 2) throw std::invalid_argument("synthetic: feature_dim must be >= n_classes + 2");
  if (snippets_min < 2 || snippets_max < snippets_min) throw std::invalid_argument("synthetic: bad snippet range");
  if (!(noise >= 0)) throw std::invalid_argument("synthetic: noise must be >= 0");
  if (!(absent_class_score >= 0 && absent_class_score < 1)) {
    throw std::invalid_argument("synthetic: absent_class_score must lie in [0, 1)");
  }
}

std::string class_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "action_%02zu", index);
  return buf;
}

namespace {

constexpr int kPackingAttempts = 200;

// Instances lie inside [0, 0.95 * duration] with gaps of at least 2% of the
// duration between them. Lengths are drawn first; the leftover slack is then
// split at sorted uniform cut points, which places the instances uniformly
// over all feasible layouts.
std::vector<Segment> pack_instances(std::size_t count, double duration, const SyntheticSpec& spec, Rng& rng,
                                    const std::string& video_id) {
  const double gap = 0.02 * duration;
  const double limit = 0.95 * duration;
  for (int attempt = 0; attempt < kPackingAttempts; ++attempt) {
    std::vector<double> lengths(count);
    double used = gap * static_cast<double>(count - 1);
    for (auto& len : lengths) {
      len = duration * rng.uniform(spec.instance_fraction_min, spec.instance_fraction_max);
      used += len;
    }
    if (used > limit) continue;
    std::vector<double> cuts(count);
    for (auto& c : cuts) c = rng.uniform(0.0, limit - used);
    std::sort(cuts.begin(), cuts.end());
    std::vector<Segment> placed;
    double offset = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
      const double start = cuts[k] + offset;
      placed.push_back({start, start + lengths[k]});
      offset += lengths[k] + gap;
    }
    return placed;
  }
  throw std::runtime_error("synthetic: cannot pack " + std::to_string(count) + " instances into " + video_id +
                           " after " + std::to_string(kPackingAttempts) + " attempts");
}

}  // namespace

SyntheticDataset gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SyntheticDataset data;
  for (std::size_t v = 0; v < spec.n_videos; ++v) {
    char id_buf[32];
    std::snprintf(id_buf, sizeof id_buf, "v_%05zu", v);
    const std::string id = id_buf;

    const double duration = rng.uniform(spec.duration_min, spec.duration_max);
    const auto count = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(spec.instances_min),
                                                                static_cast<std::int64_t>(spec.instances_max)));
    const auto cls = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(spec.n_classes) - 1));
    const auto length = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(spec.snippets_min),
                                                                 static_cast<std::int64_t>(spec.snippets_max)));
    const auto segments = count ? pack_instances(count, duration, spec, rng, id) : std::vector<Segment>{};

    VideoAnnotation ann;
    ann.duration_seconds = duration;
    ann.subset = v + spec.n_validation >= spec.n_videos ? "validation" : "training";
    for (const auto& seg : segments) ann.instances.push_back({class_name(cls), seg});

    const double snippet = duration / static_cast<double>(length);
    std::vector<double> values(length * spec.feature_dim, 0.0);
    for (std::size_t i = 0; i < length; ++i) {
      double* row = values.data() + i * spec.feature_dim;
      const double centre = (static_cast<double>(i) + 0.5) * snippet;
      for (const auto& seg : segments) {
        if (centre >= seg.start && centre <= seg.end) row[cls] = 1.0;
        const double ds = (centre - seg.start) / snippet;
        const double de = (centre - seg.end) / snippet;
        row[spec.n_classes] += std::exp(-0.5 * ds * ds);
        row[spec.n_classes + 1] += std::exp(-0.5 * de * de);
      }
      if (spec.noise > 0) {
        for (std::size_t c = 0; c < spec.feature_dim; ++c) row[c] += spec.noise * rng.normal();
      }
    }
    // Feature files store float32; keep the in-memory copy identical.
    for (auto& x : values) x = static_cast<double>(static_cast<float>(x));
    data.features.emplace(id, Tensor::from_data({length, spec.feature_dim}, std::move(values)));

    VideoClassScores scores{id, {}};
    for (std::size_t c = 0; c < spec.n_classes; ++c) scores.scores[class_name(c)] = spec.absent_class_score;
    if (count) scores.scores[class_name(cls)] = 1.0;
    data.class_scores.emplace(id, std::move(scores));
    data.annotations.videos.emplace(id, std::move(ann));
  }
  return data;
}

void write_dataset(const std::filesystem::path& dir, const SyntheticDataset& data) {
  save_annotations(dir / "annotations.json", data.annotations);
  save_class_scores(dir / "class_scores.json", data.class_scores);
  for (const auto& [id, features] : data.features) save_features(dir / "features" / (id + ".talf"), features);
}

}  // namespace talforge
