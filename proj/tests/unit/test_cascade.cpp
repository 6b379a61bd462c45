#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"
#include "talforge/cascade.hpp"
#include "talforge/checkpoint.hpp"
#include "talforge/evaluation.hpp"

using namespace talforge;
using talforge::oracle::interp_row;
using talforge::test::random_tensor;

namespace {

CascadeConfig small_cascade() {
  CascadeConfig cfg;
  cfg.n_bins = 4;
  cfg.hidden = 6;
  return cfg;
}

std::vector<Proposal> random_proposals(Rng& rng, double duration, std::size_t n) {
  std::vector<Proposal> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = rng.uniform(0.0, 0.8 * duration);
    const double e = rng.uniform(s + 0.01 * duration, duration);
    out.push_back({s, e, rng.uniform(), "pnet"});
  }
  return out;
}

}  // namespace

TEST_CASE("proposal features: constant input and exact grid positions") {
  auto constant = Tensor::full({10, 3}, 0.4);
  auto f = sample_proposal_feature(constant, {2.0, 6.0, 0.5, ""}, 10.0, 0.0, 5);
  CHECK(f.shape() == Shape{15});
  for (double v : f.data()) CHECK(v == doctest::Approx(0.4).epsilon(1e-15));

  Rng rng(1);
  auto enc = random_tensor({10, 3}, rng);
  // 10 s over 10 cells: bins at 2, 3, 4, 5, 6
  auto g = sample_proposal_feature(enc, {2.0, 6.0, 0.5, ""}, 10.0, 0.0, 5);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 3; ++j) CHECK(g.at(i * 3 + j) == enc.at(2 + i, j));
  }
  CHECK_THROWS_AS(sample_proposal_feature(enc, {3.0, 3.0, 0.5, ""}, 10.0, 0.0, 5), std::invalid_argument);
}

TEST_CASE("proposal features match the interpolation oracle") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const auto t = static_cast<std::size_t>(rng.uniform_int(2, 32));
    const double duration = rng.uniform(5.0, 100.0);
    const double ratio = rng.uniform(0.0, 0.5);
    const auto bins = static_cast<std::size_t>(rng.uniform_int(2, 16));
    auto enc = random_tensor({t, 4}, rng);
    const auto p = random_proposals(rng, duration, 1).front();
    auto f = sample_proposal_feature(enc, p, duration, ratio, bins);
    const double cell = duration / static_cast<double>(t);
    const double len = p.t_end - p.t_start;
    for (std::size_t i = 0; i < bins; ++i) {
      const double lo = p.t_start - ratio * len, hi = p.t_end + ratio * len;
      const double pos = (lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins - 1)) / cell;
      const auto want = interp_row(enc, pos);
      for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(f.at(i * 4 + j) - want[j]) < 1e-12);
    }
  }
}

TEST_CASE("stage output rules") {
  const Proposal p{10.0, 20.0, 0.6, "pnet"};
  CHECK(apply_stage_output(p, {}, 50.0) == p);

  auto moved = apply_stage_output(p, {0.1, -0.2, 0.0}, 50.0);
  CHECK(moved.t_start == doctest::Approx(11.0));
  CHECK(moved.t_end == doctest::Approx(18.0));

  auto clamped = apply_stage_output(p, {-5.0, 10.0, 0.0}, 50.0);
  CHECK(clamped.t_start == 0.0);
  CHECK(clamped.t_end == 50.0);

  auto crossed = apply_stage_output(p, {2.0, -2.0, 1.0}, 50.0);
  CHECK(crossed.t_start == p.t_start);
  CHECK(crossed.t_end == p.t_end);
  CHECK(crossed.score == doctest::Approx(std::min(1.0, 0.6 * 2.0 / (1.0 + std::exp(-1.0)))));

  CHECK(apply_stage_output(p, {0.0, 0.0, 50.0}, 50.0).score == 1.0);
  CHECK(apply_stage_output(p, {0.0, 0.0, -2.0}, 50.0).score < p.score);
  CHECK_THROWS_AS(apply_stage_output(p, {std::nan(""), 0.0, 0.0}, 50.0), std::domain_error);
}

TEST_CASE("untrained cascade is the exact identity") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    CascadeRefiner refiner(5, small_cascade(), seed);
    auto enc = random_tensor({12, 5}, rng);
    const auto proposals = random_proposals(rng, 40.0, 15);
    CHECK(cascade_refine(proposals, enc, 40.0, refiner) == proposals);
    StageParams zero{zero_linear(20, 6), zero_linear(6, 3)};
    CHECK(refine_stage(proposals[0], sample_proposal_feature(enc, proposals[0], 40.0, 0.25, 4), zero, 40.0) ==
          proposals[0]);
  }
  CHECK(CascadeConfig{}.n_stages == 3);
  CHECK(CascadeConfig{}.iou_floors == std::vector<double>{0.5, 0.6, 0.7});
}

TEST_CASE("refined proposals stay valid and keep input order") {
  Rng rng(3);
  CascadeRefiner refiner(5, small_cascade(), 4);
  for (auto& stage : refiner.stages()) {
    for (auto& v : stage.output.weight.mutable_data()) v = rng.uniform(-2.0, 2.0);
  }
  auto enc = random_tensor({12, 5}, rng);
  const auto proposals = random_proposals(rng, 40.0, 30);
  const auto refined = refiner.refine(proposals, enc, 40.0);
  REQUIRE(refined.size() == proposals.size());
  for (std::size_t i = 0; i < refined.size(); ++i) {
    CHECK(refined[i].t_start >= 0.0);
    CHECK(refined[i].t_start < refined[i].t_end);
    CHECK(refined[i].t_end <= 40.0);
    CHECK((refined[i].score >= 0.0 && refined[i].score <= 1.0));
    CHECK(refined[i].provenance == proposals[i].provenance);
  }
  CHECK(refiner.refine(proposals, enc, 40.0) == refined);
  CHECK_THROWS_AS(refiner.refine(proposals, random_tensor({12, 4}, rng), 40.0), std::invalid_argument);
}

TEST_CASE("per-stage refinement matches single-proposal stage application") {
  Rng rng(8);
  CascadeRefiner refiner(5, small_cascade(), 9);
  for (auto& stage : refiner.stages()) {
    for (auto& v : stage.output.weight.mutable_data()) v = rng.uniform(-0.5, 0.5);
  }
  auto enc = random_tensor({12, 5}, rng);
  const auto proposals = random_proposals(rng, 30.0, 6);
  const auto batched = refiner.refine(proposals, enc, 30.0);
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    Proposal p = proposals[i];
    for (const auto& stage : refiner.stages()) {
      p = refine_stage(p, sample_proposal_feature(enc, p, 30.0, 0.25, 4), stage, 30.0);
    }
    CHECK(p.t_start == doctest::Approx(batched[i].t_start).epsilon(1e-12));
    CHECK(p.t_end == doctest::Approx(batched[i].t_end).epsilon(1e-12));
    CHECK(p.score == doctest::Approx(batched[i].score).epsilon(1e-12));
  }
}

TEST_CASE("stage head and feature sampling pass grad_check over 20 seeds") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    auto enc = random_tensor({10, 3}, rng);
    const auto p = random_proposals(rng, 20.0, 1).front();
    auto proj = random_tensor({12}, rng);
    CHECK(grad_check([&](const Tensor& e) { return sum(mul(sample_proposal_feature(e, p, 20.0, 0.25, 4), proj)); },
                     enc) < 1e-4);
    StageParams params{make_linear(12, 5, rng), make_linear(5, 3, rng)};
    auto x = random_tensor({4, 12}, rng);
    auto proj_out = random_tensor({4, 3}, rng);
    CHECK(grad_check([&](const Tensor& t) { return sum(mul(stage_head(t, params), proj_out)); }, x) < 1e-4);
    CHECK(grad_check(
              [&](const Tensor& w) {
                StageParams q{params.hidden, {w, params.output.bias}};
                return sum(mul(stage_head(x, q), proj_out));
              },
              params.output.weight) < 1e-4);
  }
}

TEST_CASE("cascade targets") {
  const std::vector<GroundTruth> gts{{"a", {2.0, 10.0}}, {"a", {30.0, 40.0}}};
  const auto t = make_cascade_targets({{2.0, 10.0, 1.0, ""}, {0.0, 10.0, 1.0, ""}, {15.0, 25.0, 1.0, ""}}, gts, 0.5);
  CHECK(t[0].positive);
  CHECK(t[0].delta_start == 0.0);
  CHECK(t[0].delta_end == 0.0);
  CHECK(t[0].iou == 1.0);
  CHECK(t[1].positive);
  CHECK(t[1].delta_start == doctest::Approx(0.2));
  CHECK(t[1].delta_end == 0.0);
  CHECK_FALSE(t[2].positive);
  CHECK(t[2].iou == 0.0);
  const auto none = make_cascade_targets({{2.0, 10.0, 1.0, ""}}, {}, 0.5);
  CHECK_FALSE(none[0].positive);
}

namespace {

// Encoded features carry a boundary signal: channel 0 spikes at starts,
// channel 1 at ends, channel 2 is noise.
std::vector<CascadeVideo> boundary_videos(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<CascadeVideo> out;
  for (std::size_t v = 0; v < n; ++v) {
    const double duration = 32.0;
    const double s = std::floor(rng.uniform(2.0, 12.0));
    const double e = s + std::floor(rng.uniform(6.0, 14.0));
    std::vector<double> enc(32 * 3);
    for (std::size_t t = 0; t < 32; ++t) {
      const double ds = static_cast<double>(t) - s, de = static_cast<double>(t) - e;
      enc[t * 3] = std::exp(-0.5 * ds * ds);
      enc[t * 3 + 1] = std::exp(-0.5 * de * de);
      enc[t * 3 + 2] = 0.1 * rng.normal();
    }
    CascadeVideo video{"v" + std::to_string(v), duration, Tensor::from_data({32, 3}, enc), {}, {{"a", {s, e}}}};
    for (int k = 0; k < 8; ++k) {
      const double len = e - s;
      const double ps = std::max(0.0, s + rng.uniform(-0.25, 0.25) * len);
      const double pe = std::min(duration, e + rng.uniform(-0.25, 0.25) * len);
      video.proposals.push_back({ps, pe, 0.5, "pnet"});
    }
    out.push_back(std::move(video));
  }
  return out;
}

double mean_iou(const std::vector<CascadeVideo>& videos, const CascadeRefiner& refiner) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& v : videos) {
    for (const auto& p : refiner.refine(v.proposals, v.encoded, v.duration_seconds)) {
      total += iou(p.segment(), v.instances[0].segment);
      ++n;
    }
  }
  return total / static_cast<double>(n);
}

}  // namespace

TEST_CASE("cascade training lowers stage losses and tightens boundaries") {
  const auto train = boundary_videos(60, 1);
  const auto held_out = boundary_videos(20, 2);
  CascadeConfig cfg;
  cfg.n_bins = 8;
  cfg.hidden = 16;
  cfg.train.epochs = 30;
  cfg.train.batch_size = 32;
  cfg.train.learning_rate = 0.05;
  CascadeRefiner refiner(3, cfg, 5);
  const double before = mean_iou(held_out, refiner);
  const auto log = train_cascade(refiner, train);
  REQUIRE(log.stage_loss.size() == 3);
  for (const auto& losses : log.stage_loss) CHECK(losses.back() < losses.front());
  CHECK(mean_iou(held_out, refiner) > before);
}

TEST_CASE("cascade training is deterministic; zero epochs keep the initialisation") {
  const auto videos = boundary_videos(10, 3);
  CascadeConfig cfg = small_cascade();
  cfg.train.epochs = 2;
  CascadeRefiner a(3, cfg, 1), b(3, cfg, 1);
  train_cascade(a, videos);
  train_cascade(b, videos);
  CHECK(encode_checkpoint(snapshot(a.parameters())) == encode_checkpoint(snapshot(b.parameters())));

  cfg.train.epochs = 0;
  CascadeRefiner c(3, cfg, 1);
  const auto init = encode_checkpoint(snapshot(c.parameters()));
  train_cascade(c, videos);
  CHECK(encode_checkpoint(snapshot(c.parameters())) == init);
}

TEST_CASE("cascade config validation and empty pools") {
  CascadeConfig cfg;
  cfg.iou_floors = {0.7, 0.6, 0.5};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = CascadeConfig{};
  cfg.n_bins = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CascadeRefiner refiner(3, small_cascade(), 1);
  CHECK_THROWS_AS(train_cascade(refiner, {}), std::invalid_argument);
}
