#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "talforge/evaluation.hpp"

using namespace talforge;

namespace {

Detection det(const std::string& video, const std::string& label, double s, double e, double score) {
  return {video, {s, e, score, ""}, label, score};
}

AnnotationSet one_video(std::vector<GroundTruth> instances) {
  AnnotationSet set;
  set.videos["v"] = {100.0, "validation", std::move(instances)};
  return set;
}

}  // namespace

TEST_CASE("iou examples and properties") {
  CHECK(iou({0, 1}, {0, 1}) == 1.0);
  CHECK(iou({0, 1}, {2, 3}) == 0.0);
  CHECK(iou({0, 1}, {1, 2}) == 0.0);
  CHECK(iou({0, 2}, {1, 3}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS(iou({1, 1}, {0, 2}), std::invalid_argument);
  CHECK_THROWS_AS(iou({0, 2}, {3, 2}), std::invalid_argument);
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double s1 = rng.uniform(0, 10), s2 = rng.uniform(0, 10);
    const Segment a{s1, s1 + rng.uniform(0.01, 5)}, b{s2, s2 + rng.uniform(0.01, 5)};
    const double v = iou(a, b);
    CHECK(v == iou(b, a));
    CHECK((v >= 0.0 && v <= 1.0));
    CHECK(iou(a, a) == 1.0);
  }
}

TEST_CASE("average precision worked examples") {
  const ClassGroundTruth gt{{"v", {{10, 20}}}};
  CHECK(average_precision({det("v", "a", 10, 20, 0.7)}, gt, 0.5)->ap == 1.0);
  CHECK(average_precision({}, gt, 0.5)->ap == 0.0);
  CHECK_FALSE(average_precision({det("v", "a", 10, 20, 0.7)}, {}, 0.5).has_value());

  const auto r = average_precision({det("v", "a", 50, 60, 0.9), det("v", "a", 10, 20, 0.8)}, gt, 0.5);
  CHECK(r->ap == 0.5);
  CHECK(r->curve.recall == std::vector<double>{0.0, 1.0});
  CHECK(r->curve.precision == std::vector<double>{0.0, 0.5});

  // duplicates: the second hit on the same instance is a false positive
  const auto dup = average_precision({det("v", "a", 10, 20, 0.9), det("v", "a", 10, 20, 0.8)}, gt, 0.5);
  CHECK(dup->ap == 1.0);
  CHECK(dup->curve.precision.back() == 0.5);

  // detection on another video never matches
  CHECK(average_precision({det("w", "a", 10, 20, 0.9)}, gt, 0.5)->ap == 0.0);

  // ties keep input order: FP first gives precision 1/2 at full recall
  CHECK(average_precision({det("v", "a", 50, 60, 0.5), det("v", "a", 10, 20, 0.5)}, gt, 0.5)->ap == 0.5);
  CHECK(average_precision({det("v", "a", 10, 20, 0.5), det("v", "a", 50, 60, 0.5)}, gt, 0.5)->ap == 1.0);
}

TEST_CASE("greedy matching prefers the highest-IoU free instance") {
  const ClassGroundTruth gt{{"v", {{0, 10}, {2, 12}}}};
  // [2, 12] claims the exact instance; [0, 10] then claims the remaining one
  const auto r = average_precision({det("v", "a", 2, 12, 0.9), det("v", "a", 0, 10, 0.8)}, gt, 0.5);
  CHECK(r->ap == 1.0);
  // at 0.9, [1, 11] (IoU 9/11 with both) misses; [0, 10] recovers half the recall at precision 1/2
  const auto strict = average_precision({det("v", "a", 1, 11, 0.9), det("v", "a", 0, 10, 0.8)}, gt, 0.9);
  CHECK(strict->ap == 0.25);
}

TEST_CASE("mean mAP equals the naive oracle on random instances") {
  const EvalConfig cfg;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto inst = oracle::random_eval_instance(seed);
    const auto report = mean_map(inst.detections, inst.gts, cfg);
    const auto want = oracle::naive_map(inst.detections, inst.gts, cfg.iou_thresholds);
    double avg = 0.0;
    for (const auto& [thr, m] : want) {
      CHECK(std::abs(report.per_threshold.at(thr) - m) < 1e-9);
      avg += m;
    }
    CHECK(std::abs(report.average_map - avg / 10.0) < 1e-9);
  }
}

TEST_CASE("threshold ladder is 0.50 to 0.95 in steps of 0.05") {
  const std::vector<double> want{0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95};
  CHECK(EvalConfig{}.iou_thresholds == want);
  EvalConfig bad;
  bad.iou_thresholds = {0.5, 0.5};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.iou_thresholds = {0.0};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.iou_thresholds = {};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("mAP depends only on the score ranking and falls with the threshold") {
  const EvalConfig cfg;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto inst = oracle::random_eval_instance(seed);
    const auto base = mean_map(inst.detections, inst.gts, cfg);
    for (auto& d : inst.detections) d.score = std::exp(3.0 * d.score) - 0.5;
    const auto transformed = mean_map(inst.detections, inst.gts, cfg);
    CHECK(transformed.per_threshold == base.per_threshold);
    double prev = 1.0;
    for (const auto& [thr, m] : base.per_threshold) {
      CHECK(m <= prev);
      prev = m;
    }
  }
}

TEST_CASE("mean mAP class handling") {
  auto gts = one_video({{"a", {10, 20}}, {"b", {30, 40}}});
  const auto perfect = mean_map({det("v", "a", 10, 20, 1.0), det("v", "b", 30, 40, 1.0)}, gts, {});
  CHECK(perfect.average_map == 1.0);
  for (const auto& [thr, m] : perfect.per_threshold) CHECK(m == 1.0);

  // a detection for a class without ground truth is ignored, not scored
  const auto extra = mean_map({det("v", "a", 10, 20, 1.0), det("v", "b", 30, 40, 1.0), det("v", "z", 0, 5, 1.0)}, gts, {});
  CHECK(extra.average_map == 1.0);
  CHECK(extra.per_class.count("z") == 0);

  const auto half = mean_map({det("v", "a", 10, 20, 1.0)}, gts, {});
  CHECK(half.average_map == 0.5);
  CHECK(half.per_class.at("b").at(0.5) == 0.0);
  CHECK(half.curves.at("a").at(0.5).recall == std::vector<double>{1.0});

  CHECK_THROWS_AS(mean_map({}, one_video({}), {}), std::invalid_argument);
  CHECK_THROWS_AS(mean_map({}, AnnotationSet{}, {}), std::invalid_argument);
}

TEST_CASE("average recall at k") {
  AnnotationSet gts;
  gts.videos["v1"] = {100.0, "validation", {{"a", {0, 10}}, {"a", {20, 30}}}};
  gts.videos["v2"] = {100.0, "validation", {{"b", {5, 15}}}};
  const ProposalSet proposals{
      {"v1", {{0, 10, 0.9, ""}, {50, 60, 0.8, ""}, {20, 30, 0.1, ""}}},
      {"v2", {{5, 14, 0.5, ""}}},
  };
  CHECK(average_recall_at_k(proposals, gts, 1, 0.5) == doctest::Approx(2.0 / 3.0));
  CHECK(average_recall_at_k(proposals, gts, 2, 0.5) == doctest::Approx(2.0 / 3.0));
  CHECK(average_recall_at_k(proposals, gts, 3, 0.5) == 1.0);
  CHECK(average_recall_at_k(proposals, gts, 3, 0.95) == doctest::Approx(2.0 / 3.0));
  CHECK(average_recall_at_k({}, gts, 5, 0.5) == 0.0);
  CHECK_THROWS_AS(average_recall_at_k(proposals, gts, 0, 0.5), std::invalid_argument);

  ProposalSet exact;
  for (const auto& [video, ann] : gts.videos) {
    for (const auto& inst : ann.instances) exact[video].push_back({inst.segment.start, inst.segment.end, 1.0, ""});
  }
  CHECK(average_recall_at_k(exact, gts, 2, 0.95) == 1.0);
}

TEST_CASE("mean best IoU") {
  const auto gts = one_video({{"a", {0, 10}}, {"a", {20, 30}}});
  CHECK(mean_best_iou({{"v", {{0, 10, 1, ""}, {50, 60, 1, ""}}}}, gts) == 0.5);
  CHECK(mean_best_iou({{"v", {{0, 5, 1, ""}, {20, 30, 1, ""}}}}, gts) == 0.75);
  CHECK(mean_best_iou({}, gts) == 0.0);
  CHECK(mean_best_iou({{"other", {{0, 10, 1, ""}}}}, gts) == 0.0);
}
