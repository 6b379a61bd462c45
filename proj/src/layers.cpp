#include "talforge/layers.hpp"

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>

#include "talforge/ops.hpp"

namespace talforge {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMajor>;
using ConstMatMap = Eigen::Map<const RowMajor>;

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = rng.uniform(-bound, bound);
  return Tensor::from_data(std::move(shape), std::move(values), true);
}

Tensor activate(const Tensor& x, Activation act) {
  switch (act) {
    case Activation::kNone: return x;
    case Activation::kRelu: return relu(x);
    case Activation::kSigmoid: return sigmoid(x);
  }
  return x;
}

}  // namespace

Tensor conv1d(const Tensor& x, const Conv1dParams& p) {
  if (x.rank() != 2) throw std::invalid_argument("conv1d: input must be [C_in x T], got " + shape_to_string(x.shape()));
  if (p.weight.rank() != 3) throw std::invalid_argument("conv1d: weight must be rank 3");
  const std::size_t c_in = p.in_channels(), c_out = p.out_channels(), k = p.kernel();
  if (x.dim(0) != c_in) {
    throw std::invalid_argument("conv1d: input has " + std::to_string(x.dim(0)) + " channels, weight expects " +
                                std::to_string(c_in));
  }
  if (p.bias.numel() != c_out) throw std::invalid_argument("conv1d: bias length does not match C_out");
  const std::size_t t_in = x.dim(1);
  if (t_in + 2 * p.padding < k) throw std::invalid_argument("conv1d: sequence too short for kernel");
  const std::size_t t_out = t_in + 2 * p.padding - k + 1;
  const auto pad = static_cast<std::ptrdiff_t>(p.padding);

  // im2col: column row (i*k + j), column t holds x[i, t + j - pad].
  std::vector<double> cols(c_in * k * t_out, 0.0);
  auto xd = x.data();
  for (std::size_t i = 0; i < c_in; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      double* row = cols.data() + (i * k + j) * t_out;
      for (std::size_t t = 0; t < t_out; ++t) {
        const auto src = static_cast<std::ptrdiff_t>(t + j) - pad;
        if (src >= 0 && src < static_cast<std::ptrdiff_t>(t_in)) row[t] = xd[i * t_in + static_cast<std::size_t>(src)];
      }
    }
  }
  std::vector<double> out(c_out * t_out);
  MatMap out_m(out.data(), c_out, t_out);
  out_m.noalias() = ConstMatMap(p.weight.data().data(), c_out, c_in * k) * ConstMatMap(cols.data(), c_in * k, t_out);
  auto bd = p.bias.data();
  for (std::size_t o = 0; o < c_out; ++o) out_m.row(o).array() += bd[o];

  Tensor pre = make_op_result(
      {c_out, t_out}, std::move(out), {x, p.weight, p.bias},
      [cols = std::move(cols), c_in, c_out, k, t_in, t_out, pad](detail::Node& self) {
        ConstMatMap upstream(self.grad.data(), c_out, t_out);
        auto& xin = *self.inputs[0];
        auto& w = *self.inputs[1];
        auto& b = *self.inputs[2];
        if (w.requires_grad) {
          MatMap(w.grad.data(), c_out, c_in * k).noalias() +=
              upstream * ConstMatMap(cols.data(), c_in * k, t_out).transpose();
        }
        if (b.requires_grad) {
          for (std::size_t o = 0; o < c_out; ++o) b.grad[o] += upstream.row(o).sum();
        }
        if (xin.requires_grad) {
          RowMajor dcols = ConstMatMap(w.data.data(), c_out, c_in * k).transpose() * upstream;
          for (std::size_t i = 0; i < c_in; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
              for (std::size_t t = 0; t < t_out; ++t) {
                const auto src = static_cast<std::ptrdiff_t>(t + j) - pad;
                if (src >= 0 && src < static_cast<std::ptrdiff_t>(t_in)) {
                  xin.grad[i * t_in + static_cast<std::size_t>(src)] += dcols(static_cast<Eigen::Index>(i * k + j), static_cast<Eigen::Index>(t));
                }
              }
            }
          }
        }
      });
  return activate(pre, p.activation);
}

Tensor linear(const Tensor& x, const LinearParams& p) {
  if (p.weight.rank() != 2) throw std::invalid_argument("linear: weight must be [D x E]");
  const std::size_t d = p.weight.dim(0), e = p.weight.dim(1);
  if (x.rank() == 0 || x.shape().back() != d) {
    throw std::invalid_argument("linear: input " + shape_to_string(x.shape()) + " does not end in extent " +
                                std::to_string(d));
  }
  Shape out_shape = x.shape();
  out_shape.back() = e;
  const std::size_t rows = x.numel() / d;
  Tensor flat = x.rank() == 2 ? x : reshape(x, {rows, d});
  Tensor y = add(matmul(flat, p.weight), p.bias);
  return x.rank() == 2 ? y : reshape(y, std::move(out_shape));
}

Tensor lstm_pass(const Tensor& x, const LstmDirectionParams& p, std::size_t hidden) {
  if (x.rank() != 2 || x.dim(0) == 0) throw std::invalid_argument("lstm: input must be [T x D] with T >= 1");
  const std::size_t h = hidden;
  if (p.input_weight.dim(0) != 4 * h || p.recurrent_weight.dim(0) != 4 * h || p.recurrent_weight.dim(1) != h ||
      p.bias.numel() != 4 * h) {
    throw std::invalid_argument("lstm: parameter shapes inconsistent with hidden size " + std::to_string(h));
  }
  if (p.input_weight.dim(1) != x.dim(1)) {
    throw std::invalid_argument("lstm: input width " + std::to_string(x.dim(1)) + " does not match W " +
                                shape_to_string(p.input_weight.shape()));
  }
  const std::size_t steps = x.dim(0);
  // Input projections for every step at once: [T x 4H].
  Tensor projected = add(matmul(x, transpose(p.input_weight)), p.bias);
  Tensor recurrent_t = transpose(p.recurrent_weight);

  Tensor hidden_state = Tensor::zeros({1, h});
  Tensor cell = Tensor::zeros({1, h});
  std::vector<Tensor> outputs;
  outputs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor z = add(slice_rows(projected, t, t + 1), matmul(hidden_state, recurrent_t));
    Tensor in_gate = sigmoid(slice_cols(z, 0, h));
    Tensor forget_gate = sigmoid(slice_cols(z, h, 2 * h));
    Tensor candidate = tanh(slice_cols(z, 2 * h, 3 * h));
    Tensor out_gate = sigmoid(slice_cols(z, 3 * h, 4 * h));
    cell = add(mul(forget_gate, cell), mul(in_gate, candidate));
    hidden_state = mul(out_gate, tanh(cell));
    outputs.push_back(hidden_state);
  }
  return stack_rows(outputs);
}

Tensor bilstm(const Tensor& x, const BiLstmParams& p) {
  Tensor fwd = lstm_pass(x, p.forward, p.hidden);
  Tensor bwd = reverse_rows(lstm_pass(reverse_rows(x), p.backward, p.hidden));
  return concat_cols({fwd, bwd});
}

Conv1dParams make_conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t padding,
                         Activation activation, Rng& rng) {
  if (in_channels == 0 || out_channels == 0 || kernel == 0) throw std::invalid_argument("conv1d: extents must be >= 1");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels * kernel));
  Conv1dParams p;
  p.weight = uniform_tensor({out_channels, in_channels, kernel}, bound, rng);
  p.bias = uniform_tensor({out_channels}, bound, rng);
  p.padding = padding;
  p.activation = activation;
  return p;
}

LinearParams make_linear(std::size_t in_features, std::size_t out_features, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
  return {uniform_tensor({in_features, out_features}, bound, rng), uniform_tensor({out_features}, bound, rng)};
}

LinearParams zero_linear(std::size_t in_features, std::size_t out_features) {
  return {Tensor::zeros({in_features, out_features}, true), Tensor::zeros({out_features}, true)};
}

BiLstmParams make_bilstm(std::size_t input_size, std::size_t hidden, Rng& rng) {
  auto direction = [&] {
    LstmDirectionParams d;
    d.input_weight = uniform_tensor({4 * hidden, input_size}, 1.0 / std::sqrt(static_cast<double>(input_size)), rng);
    d.recurrent_weight = uniform_tensor({4 * hidden, hidden}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
    d.bias = uniform_tensor({4 * hidden}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
    return d;
  };
  BiLstmParams p;
  p.forward = direction();
  p.backward = direction();
  p.hidden = hidden;
  return p;
}

void ParameterSet::add(std::string name, Tensor tensor) {
  for (const auto& e : entries_) {
    if (e.name == name) throw std::invalid_argument("duplicate parameter name: " + name);
  }
  entries_.push_back({std::move(name), std::move(tensor)});
}

void ParameterSet::add(const std::string& prefix, const Conv1dParams& p) {
  add(prefix + ".weight", p.weight);
  add(prefix + ".bias", p.bias);
}

void ParameterSet::add(const std::string& prefix, const LinearParams& p) {
  add(prefix + ".weight", p.weight);
  add(prefix + ".bias", p.bias);
}

void ParameterSet::add(const std::string& prefix, const BiLstmParams& p) {
  add(prefix + ".fwd.W", p.forward.input_weight);
  add(prefix + ".fwd.U", p.forward.recurrent_weight);
  add(prefix + ".fwd.b", p.forward.bias);
  add(prefix + ".bwd.W", p.backward.input_weight);
  add(prefix + ".bwd.U", p.backward.recurrent_weight);
  add(prefix + ".bwd.b", p.backward.bias);
}

const Tensor& ParameterSet::get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw std::out_of_range("no parameter named " + name);
}

std::size_t ParameterSet::total_elements() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

}  // namespace talforge
