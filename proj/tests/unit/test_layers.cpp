#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "talforge/checkpoint.hpp"
#include "talforge/layers.hpp"
#include "talforge/ops.hpp"
#include "talforge/optim.hpp"

using namespace talforge;
using talforge::test::random_tensor;
using talforge::test::to_vector;

namespace {

// Direct loops, zero padding, no activation.
std::vector<double> naive_conv(const Tensor& x, const Conv1dParams& p) {
  const std::size_t cin = x.dim(0), t = x.dim(1), cout = p.weight.dim(0), k = p.weight.dim(2);
  const std::size_t tout = t + 2 * p.padding - k + 1;
  std::vector<double> out(cout * tout);
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t j = 0; j < tout; ++j) {
      double acc = p.bias.at(o);
      for (std::size_t c = 0; c < cin; ++c) {
        for (std::size_t q = 0; q < k; ++q) {
          const long src = static_cast<long>(j + q) - static_cast<long>(p.padding);
          if (src < 0 || src >= static_cast<long>(t)) continue;
          acc += p.weight.data()[(o * cin + c) * k + q] * x.at(c, static_cast<std::size_t>(src));
        }
      }
      out[o * tout + j] = acc;
    }
  }
  return out;
}

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Scalar-loop LSTM over rows of x, gate order i, f, g, o.
std::vector<double> naive_lstm(const Tensor& x, const LstmDirectionParams& p, std::size_t h, bool reverse) {
  const std::size_t t_len = x.dim(0), d = x.dim(1);
  std::vector<double> hs(h, 0.0), cs(h, 0.0), out(t_len * h);
  for (std::size_t step = 0; step < t_len; ++step) {
    const std::size_t t = reverse ? t_len - 1 - step : step;
    std::vector<double> z(4 * h);
    for (std::size_t r = 0; r < 4 * h; ++r) {
      double acc = p.bias.at(r);
      for (std::size_t c = 0; c < d; ++c) acc += p.input_weight.at(r, c) * x.at(t, c);
      for (std::size_t c = 0; c < h; ++c) acc += p.recurrent_weight.at(r, c) * hs[c];
      z[r] = acc;
    }
    for (std::size_t u = 0; u < h; ++u) {
      const double i = sig(z[u]), f = sig(z[h + u]), g = std::tanh(z[2 * h + u]), o = sig(z[3 * h + u]);
      cs[u] = f * cs[u] + i * g;
      hs[u] = o * std::tanh(cs[u]);
      out[t * h + u] = hs[u];
    }
  }
  return out;
}

Tensor projected(const Tensor& y, std::uint64_t seed) {
  Rng r(seed);
  return sum(mul(y, random_tensor(y.shape(), r)));
}

}  // namespace

TEST_CASE("conv1d identity kernel returns the input") {
  Conv1dParams p{Tensor::from_data({2, 2, 1}, {1, 0, 0, 1}), Tensor::zeros({2}), 0, Activation::kNone};
  auto x = Tensor::from_data({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(to_vector(conv1d(x, p)) == to_vector(x));
}

TEST_CASE("conv1d with zero weights outputs the bias") {
  Conv1dParams p{Tensor::zeros({1, 3, 3}), Tensor::from_data({1}, {0.7}), 1, Activation::kNone};
  Rng rng(1);
  const auto y = conv1d(random_tensor({3, 6}, rng), p);
  for (double v : y.data()) CHECK(v == 0.7);
}

TEST_CASE("conv1d hand example with zero padding") {
  Conv1dParams p{Tensor::from_data({1, 1, 3}, {1, 1, 1}), Tensor::zeros({1}), 1, Activation::kNone};
  CHECK(to_vector(conv1d(Tensor::from_data({1, 3}, {1, 2, 3}), p)) == std::vector<double>{3, 6, 5});
}

TEST_CASE("conv1d matches the direct loop oracle") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto k = static_cast<std::size_t>(2 * rng.uniform_int(0, 2) + 1);
    const auto pad = static_cast<std::size_t>(rng.uniform_int(0, 2));
    auto p = make_conv1d(3, 4, k, pad, Activation::kNone, rng);
    auto x = random_tensor({3, 7}, rng);
    const auto got = to_vector(conv1d(x, p));
    const auto want = naive_conv(x, p);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-13));
  }
}

TEST_CASE("conv1d same padding preserves length and validates channels") {
  Rng rng(2);
  auto p = make_conv1d(3, 5, 5, 2, Activation::kRelu, rng);
  CHECK(conv1d(random_tensor({3, 9}, rng), p).shape() == Shape{5, 9});
  CHECK_THROWS_AS(conv1d(random_tensor({2, 9}, rng), p), std::invalid_argument);
}

TEST_CASE("linear examples") {
  LinearParams eye{Tensor::from_data({2, 2}, {1, 0, 0, 1}), Tensor::zeros({2})};
  auto x = Tensor::from_data({3, 2}, {1, 2, 3, 4, 5, 6});
  CHECK(to_vector(linear(x, eye)) == to_vector(x));
  LinearParams diff{Tensor::from_data({2, 1}, {1, -1}), Tensor::from_data({1}, {0.5})};
  CHECK(linear(Tensor::from_data({2}, {1, 1}), diff).at(0) == 0.5);
  CHECK_THROWS_AS(linear(Tensor::zeros({3}), diff), std::invalid_argument);
}

TEST_CASE("linear gradient check on a 4x3 input") {
  Rng rng(4);
  auto p = make_linear(3, 2, rng);
  auto x = random_tensor({4, 3}, rng);
  CHECK(grad_check([&](const Tensor& t) { return projected(linear(t, p), 1); }, x) < 1e-6);
}

TEST_CASE("bilstm with zero parameters outputs zeros") {
  BiLstmParams p;
  p.hidden = 3;
  for (auto* d : {&p.forward, &p.backward}) {
    d->input_weight = Tensor::zeros({12, 2});
    d->recurrent_weight = Tensor::zeros({12, 3});
    d->bias = Tensor::zeros({12});
  }
  Rng rng(1);
  auto y = bilstm(random_tensor({5, 2}, rng), p);
  CHECK(y.shape() == Shape{5, 6});
  for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("bilstm matches the scalar-loop oracle") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    auto p = make_bilstm(3, 2, rng);
    auto x = random_tensor({6, 3}, rng);
    auto y = bilstm(x, p);
    const auto fwd = naive_lstm(x, p.forward, 2, false);
    const auto bwd = naive_lstm(x, p.backward, 2, true);
    for (std::size_t t = 0; t < 6; ++t) {
      for (std::size_t u = 0; u < 2; ++u) {
        CHECK(y.at(t, u) == doctest::Approx(fwd[t * 2 + u]).epsilon(1e-13));
        CHECK(y.at(t, 2 + u) == doctest::Approx(bwd[t * 2 + u]).epsilon(1e-13));
      }
    }
  }
}

TEST_CASE("bilstm direction symmetry") {
  Rng rng(8);
  auto p = make_bilstm(3, 2, rng);
  auto x = random_tensor({5, 3}, rng);
  BiLstmParams swapped = p;
  std::swap(swapped.forward, swapped.backward);
  auto y = bilstm(x, p);
  auto z = bilstm(reverse_rows(x), swapped);
  for (std::size_t t = 0; t < 5; ++t) {
    for (std::size_t u = 0; u < 2; ++u) {
      CHECK(z.at(4 - t, u) == doctest::Approx(y.at(t, 2 + u)).epsilon(1e-14));
      CHECK(z.at(4 - t, 2 + u) == doctest::Approx(y.at(t, u)).epsilon(1e-14));
    }
  }
}

TEST_CASE("bilstm output is bounded and validates input width") {
  Rng rng(12);
  auto p = make_bilstm(4, 3, rng);
  const auto y = bilstm(random_tensor({8, 4}, rng, -5, 5), p);
  for (double v : y.data()) CHECK(std::abs(v) < 1.0);
  CHECK_THROWS_AS(bilstm(random_tensor({8, 3}, rng), p), std::invalid_argument);
}

TEST_CASE("bilstm gradients of sum(output) match finite differences for every parameter") {
  Rng rng(21);
  auto p = make_bilstm(3, 2, rng);
  auto x = random_tensor({6, 3}, rng);
  using Setter = void (*)(BiLstmParams&, const Tensor&);
  const std::vector<std::pair<Setter, Tensor>> blocks = {
      {[](BiLstmParams& q, const Tensor& t) { q.forward.input_weight = t; }, p.forward.input_weight},
      {[](BiLstmParams& q, const Tensor& t) { q.forward.recurrent_weight = t; }, p.forward.recurrent_weight},
      {[](BiLstmParams& q, const Tensor& t) { q.forward.bias = t; }, p.forward.bias},
      {[](BiLstmParams& q, const Tensor& t) { q.backward.input_weight = t; }, p.backward.input_weight},
      {[](BiLstmParams& q, const Tensor& t) { q.backward.recurrent_weight = t; }, p.backward.recurrent_weight},
      {[](BiLstmParams& q, const Tensor& t) { q.backward.bias = t; }, p.backward.bias},
  };
  for (const auto& [set, value] : blocks) {
    CHECK(grad_check(
              [&](const Tensor& t) {
                BiLstmParams q = p;
                set(q, t);
                return sum(bilstm(x, q));
              },
              value) < 1e-4);
  }
  CHECK(grad_check([&](const Tensor& t) { return sum(bilstm(t, p)); }, x) < 1e-4);
}

TEST_CASE("layers pass grad_check over 20 seeds") {
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    Rng rng(seed);
    const auto act = static_cast<Activation>(rng.uniform_int(0, 2));
    auto conv = make_conv1d(3, 4, 3, 1, act, rng);
    auto cx = random_tensor({3, 6}, rng);
    CHECK(grad_check([&](const Tensor& t) { return projected(conv1d(t, conv), seed); }, cx) < 1e-4);
    CHECK(grad_check(
              [&](const Tensor& w) {
                auto q = conv;
                q.weight = w;
                return projected(conv1d(cx, q), seed);
              },
              conv.weight) < 1e-4);
    CHECK(grad_check(
              [&](const Tensor& b) {
                auto q = conv;
                q.bias = b;
                return projected(conv1d(cx, q), seed);
              },
              conv.bias) < 1e-4);

    auto lin = make_linear(5, 3, rng);
    auto lx = random_tensor({4, 5}, rng);
    CHECK(grad_check([&](const Tensor& t) { return projected(linear(t, lin), seed); }, lx) < 1e-4);
    CHECK(grad_check(
              [&](const Tensor& w) {
                return projected(linear(lx, LinearParams{w, lin.bias}), seed);
              },
              lin.weight) < 1e-4);
    CHECK(grad_check([&](const Tensor& b) { return projected(linear(lx, LinearParams{lin.weight, b}), seed); },
                     lin.bias) < 1e-4);

    auto lstm = make_bilstm(3, 2, rng);
    auto sx = random_tensor({4, 3}, rng);
    CHECK(grad_check([&](const Tensor& t) { return projected(bilstm(t, lstm), seed); }, sx) < 1e-4);
    CHECK(grad_check(
              [&](const Tensor& w) {
                auto q = lstm;
                q.forward.recurrent_weight = w;
                return projected(bilstm(sx, q), seed);
              },
              lstm.forward.recurrent_weight) < 1e-4);
  }
}

TEST_CASE("initialisation is seeded and bounded by 1/sqrt(fan_in)") {
  Rng a(5), b(5);
  auto p = make_conv1d(4, 6, 3, 1, Activation::kRelu, a);
  auto q = make_conv1d(4, 6, 3, 1, Activation::kRelu, b);
  CHECK(to_vector(p.weight) == to_vector(q.weight));
  const double bound = 1.0 / std::sqrt(12.0);
  for (double v : p.weight.data()) CHECK(std::abs(v) <= bound);
  const auto zero = zero_linear(3, 2);
  for (double v : zero.weight.data()) CHECK(v == 0.0);
}

TEST_CASE("parameter sets name and share storage") {
  Rng rng(1);
  auto lin = make_linear(2, 2, rng);
  ParameterSet ps;
  ps.add("head", lin);
  CHECK(ps.size() == 2);
  CHECK(ps.total_elements() == 6);
  ps.entries()[0].tensor.mutable_data()[0] = 42.0;
  CHECK(lin.weight.data()[0] == 42.0);
  CHECK_THROWS_AS(ps.add("head", lin), std::invalid_argument);
  CHECK_THROWS_AS(ps.get("missing"), std::out_of_range);
}

TEST_CASE("sgd with zero learning rate leaves parameters unchanged") {
  Rng rng(3);
  auto lin = make_linear(3, 2, rng);
  ParameterSet ps;
  ps.add("l", lin);
  const auto before = to_vector(lin.weight);
  SgdMomentum opt(ps, 0.0, 0.9);
  sum(linear(random_tensor({2, 3}, rng), lin)).backward();
  opt.step();
  CHECK(to_vector(lin.weight) == before);
}

TEST_CASE("sgd momentum update and gradient clipping") {
  auto w = Tensor::from_data({2}, {1.0, 1.0}, true);
  ParameterSet ps;
  ps.add("w", w);
  SgdMomentum opt(ps, 0.1, 0.5);
  w.mutable_grad()[0] = 3.0;
  w.mutable_grad()[1] = 4.0;
  CHECK(opt.clip_grad_norm(1.0) == doctest::Approx(5.0));
  CHECK(w.grad()[0] == doctest::Approx(0.6));
  opt.step();  // v = g
  CHECK(w.data()[0] == doctest::Approx(1.0 - 0.06));
  opt.step();  // v = 0.5 v + g
  CHECK(w.data()[0] == doctest::Approx(1.0 - 0.06 - 0.1 * (0.3 + 0.6)));
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(6);
  auto lstm = make_bilstm(3, 2, rng);
  auto lin = make_linear(4, 2, rng);
  ParameterSet ps;
  ps.add("enc", lstm);
  ps.add("head", lin);
  const auto bytes = encode_checkpoint(snapshot(ps));
  CHECK(encode_checkpoint(decode_checkpoint(bytes)) == bytes);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "TALW");

  Rng other(7);
  auto lstm2 = make_bilstm(3, 2, other);
  auto lin2 = make_linear(4, 2, other);
  ParameterSet ps2;
  ps2.add("enc", lstm2);
  ps2.add("head", lin2);
  restore(ps2, decode_checkpoint(bytes));
  CHECK(encode_checkpoint(snapshot(ps2)) == bytes);
}

TEST_CASE("checkpoint decoding errors") {
  Rng rng(6);
  ParameterSet ps;
  ps.add("head", make_linear(4, 2, rng));
  auto bytes = encode_checkpoint(snapshot(ps));
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_WITH_AS(decode_checkpoint(bad), doctest::Contains("magic"), std::runtime_error);
  auto cut = bytes;
  cut.resize(cut.size() - 3);
  CHECK_THROWS_WITH_AS(decode_checkpoint(cut), doctest::Contains("truncated payload at offset"), std::runtime_error);

  ParameterSet wrong;
  wrong.add("head", make_linear(3, 2, rng));
  CHECK_THROWS_WITH_AS(restore(wrong, decode_checkpoint(bytes)), doctest::Contains("shape"), std::runtime_error);
  ParameterSet missing;
  missing.add("other", make_linear(4, 2, rng));
  CHECK_THROWS_WITH_AS(restore(missing, decode_checkpoint(bytes)), doctest::Contains("lacks"), std::runtime_error);
}
