#include "talforge/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace talforge {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMajor>;
using ConstMatMap = Eigen::Map<const RowMajor>;

// Accumulates into an input's grad if it takes part in autodiff.
inline std::vector<double>* grad_of(detail::Node& self, std::size_t i) {
  auto& in = *self.inputs[i];
  return in.requires_grad ? &in.grad : nullptr;
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.begin(), small.end(), big.end() - static_cast<std::ptrdiff_t>(small.size()));
}

struct Broadcast {
  Shape out_shape;
  std::size_t a_period;  // a index = i % a_period
  std::size_t b_period;
};

Broadcast broadcast_shapes(const Tensor& a, const Tensor& b, const char* op) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa == sb) return {sa, a.numel(), b.numel()};
  if (sb.size() < sa.size() && is_suffix(sb, sa)) return {sa, a.numel(), b.numel()};
  if (sa.size() < sb.size() && is_suffix(sa, sb)) return {sb, a.numel(), b.numel()};
  throw std::invalid_argument(std::string(op) + ": shapes " + shape_to_string(sa) + " and " + shape_to_string(sb) +
                              " are not broadcast-compatible over leading axes");
}

template <typename Fwd, typename DA, typename DB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, DA da, DB db) {
  auto bc = broadcast_shapes(a, b, name);
  const std::size_t n = shape_numel(bc.out_shape);
  std::vector<double> out(n);
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(ad[i % bc.a_period], bd[i % bc.b_period]);
  return make_op_result(bc.out_shape, std::move(out), {a, b}, [bc, n, da, db](detail::Node& self) {
    const auto& av = self.inputs[0]->data;
    const auto& bv = self.inputs[1]->data;
    auto* ga = grad_of(self, 0);
    auto* gb = grad_of(self, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = av[i % bc.a_period];
      const double y = bv[i % bc.b_period];
      const double g = self.grad[i];
      if (ga) (*ga)[i % bc.a_period] += g * da(x, y);
      if (gb) (*gb)[i % bc.b_period] += g * db(x, y);
    }
  });
}

// `deriv` receives (input, output).
template <typename Fwd, typename Deriv>
Tensor unary_op(const Tensor& a, Fwd fwd, Deriv deriv) {
  auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = fwd(ad[i]);
  return make_op_result(a.shape(), std::move(out), {a}, [deriv](detail::Node& self) {
    auto* ga = grad_of(self, 0);
    if (!ga) return;
    const auto& x = self.inputs[0]->data;
    for (std::size_t i = 0; i < x.size(); ++i) (*ga)[i] += self.grad[i] * deriv(x[i], self.data[i]);
  });
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                                shape_to_string(t.shape()));
  }
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor elementwise(ElementwiseKind kind, const Tensor& a, const std::optional<Tensor>& b) {
  const bool binary = kind == ElementwiseKind::kAdd || kind == ElementwiseKind::kMul;
  if (binary && !b) throw std::invalid_argument("elementwise: binary op requires a second operand");
  switch (kind) {
    case ElementwiseKind::kAdd: return add(a, *b);
    case ElementwiseKind::kMul: return mul(a, *b);
    case ElementwiseKind::kSigmoid: return sigmoid(a);
    case ElementwiseKind::kTanh: return tanh(a);
    case ElementwiseKind::kRelu: return relu(a);
  }
  throw std::invalid_argument("elementwise: unknown op kind");
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary_op(a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary_op(a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary_op(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary_op(a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor square(const Tensor& a) {
  return unary_op(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor log_clamped(const Tensor& a, double floor) {
  return unary_op(
      a, [floor](double x) { return std::log(std::max(x, floor)); },
      [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

Tensor smooth_l1(const Tensor& a, double beta) {
  return unary_op(
      a,
      [beta](double x) {
        const double ax = std::abs(x);
        return ax < beta ? 0.5 * x * x / beta : ax - 0.5 * beta;
      },
      [beta](double x, double) {
        if (std::abs(x) < beta) return x / beta;
        return x > 0 ? 1.0 : -1.0;
      });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_op_result({}, {total}, {a}, [](detail::Node& self) {
    auto* ga = grad_of(self, 0);
    if (!ga) return;
    for (auto& g : *ga) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw std::invalid_argument("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw std::invalid_argument("matmul: inner extents differ: " + shape_to_string(a.shape()) + " x " +
                                shape_to_string(b.shape()));
  }
  std::vector<double> out(m * n);
  MatMap(out.data(), m, n).noalias() = ConstMatMap(a.data().data(), m, k) * ConstMatMap(b.data().data(), k, n);
  return make_op_result({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
    ConstMatMap upstream(self.grad.data(), m, n);
    if (auto* ga = grad_of(self, 0)) {
      MatMap(ga->data(), m, k).noalias() += upstream * ConstMatMap(self.inputs[1]->data.data(), k, n).transpose();
    }
    if (auto* gb = grad_of(self, 1)) {
      MatMap(gb->data(), k, n).noalias() += ConstMatMap(self.inputs[0]->data.data(), m, k).transpose() * upstream;
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const auto rows = a.dim(0), cols = a.dim(1);
  std::vector<double> out(rows * cols);
  auto ad = a.data();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = ad[i * cols + j];
  return make_op_result({cols, rows}, std::move(out), {a}, [rows, cols](detail::Node& self) {
    auto* ga = grad_of(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) (*ga)[i * cols + j] += self.grad[j * rows + i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw std::invalid_argument("reshape: cannot view " + shape_to_string(a.shape()) + " as " + shape_to_string(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_op_result(std::move(shape), std::move(out), {a}, [](detail::Node& self) {
    auto* ga = grad_of(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += self.grad[i];
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  if (a.rank() == 0 || begin >= end || end > a.dim(0)) {
    throw std::invalid_argument("slice_rows: bad range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                ") for " + shape_to_string(a.shape()));
  }
  const std::size_t row = a.numel() / a.dim(0);
  Shape shape = a.shape();
  shape[0] = end - begin;
  auto ad = a.data();
  std::vector<double> out(ad.begin() + static_cast<std::ptrdiff_t>(begin * row),
                          ad.begin() + static_cast<std::ptrdiff_t>(end * row));
  return make_op_result(std::move(shape), std::move(out), {a}, [begin, row](detail::Node& self) {
    auto* ga = grad_of(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) (*ga)[begin * row + i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank(a, 2, "slice_cols");
  if (begin >= end || end > a.dim(1)) {
    throw std::invalid_argument("slice_cols: bad range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                ") for " + shape_to_string(a.shape()));
  }
  const auto rows = a.dim(0), cols = a.dim(1), width = end - begin;
  auto ad = a.data();
  std::vector<double> out(rows * width);
  for (std::size_t i = 0; i < rows; ++i)
    std::copy_n(ad.begin() + static_cast<std::ptrdiff_t>(i * cols + begin), width, out.begin() + static_cast<std::ptrdiff_t>(i * width));
  return make_op_result({rows, width}, std::move(out), {a}, [rows, cols, begin, width](detail::Node& self) {
    auto* ga = grad_of(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < width; ++j) (*ga)[i * cols + begin + j] += self.grad[i * width + j];
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const std::size_t rows = parts.front().dim(0);
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != rows) {
      throw std::invalid_argument("concat_cols: row mismatch " + shape_to_string(parts.front().shape()) + " vs " +
                                  shape_to_string(p.shape()));
    }
    offsets.push_back(total);
    total += p.dim(1);
  }
  std::vector<double> out(rows * total);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto pd = parts[k].data();
    const auto w = parts[k].dim(1);
    for (std::size_t i = 0; i < rows; ++i)
      std::copy_n(pd.begin() + static_cast<std::ptrdiff_t>(i * w), w, out.begin() + static_cast<std::ptrdiff_t>(i * total + offsets[k]));
  }
  return make_op_result({rows, total}, std::move(out), parts, [rows, total, offsets](detail::Node& self) {
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      auto* gk = grad_of(self, k);
      if (!gk) continue;
      const auto w = self.inputs[k]->shape[1];
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < w; ++j) (*gk)[i * w + j] += self.grad[i * total + offsets[k] + j];
    }
  });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: no inputs");
  const std::size_t width = rows.front().numel();
  for (const auto& r : rows) {
    const bool row_like = r.rank() == 1 || (r.rank() == 2 && r.dim(0) == 1);
    if (!row_like || r.numel() != width) {
      throw std::invalid_argument("stack_rows: incompatible row " + shape_to_string(r.shape()) + " (expected width " +
                                  std::to_string(width) + ")");
    }
  }
  std::vector<double> out;
  out.reserve(rows.size() * width);
  for (const auto& r : rows) out.insert(out.end(), r.data().begin(), r.data().end());
  return make_op_result({rows.size(), width}, std::move(out), rows, [width](detail::Node& self) {
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      auto* gk = grad_of(self, k);
      if (!gk) continue;
      for (std::size_t j = 0; j < width; ++j) (*gk)[j] += self.grad[k * width + j];
    }
  });
}

Tensor reverse_rows(const Tensor& a) {
  if (a.rank() == 0) throw std::invalid_argument("reverse_rows: scalar input");
  const auto n = a.dim(0), row = a.numel() / n;
  auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(ad.begin() + static_cast<std::ptrdiff_t>((n - 1 - i) * row), row, out.begin() + static_cast<std::ptrdiff_t>(i * row));
  return make_op_result(a.shape(), std::move(out), {a}, [n, row](detail::Node& self) {
    auto* ga = grad_of(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < row; ++j) (*ga)[(n - 1 - i) * row + j] += self.grad[i * row + j];
  });
}

Tensor gather_rows(const Tensor& src, const std::vector<RowTaps>& taps) {
  require_rank(src, 2, "gather_rows");
  const auto n_src = src.dim(0), width = src.dim(1);
  for (const auto& t : taps) {
    if (t.lo >= n_src || t.hi >= n_src) {
      throw std::out_of_range("gather_rows: tap index beyond " + std::to_string(n_src) + " source rows");
    }
  }
  auto sd = src.data();
  std::vector<double> out(taps.size() * width);
  for (std::size_t r = 0; r < taps.size(); ++r) {
    const auto& t = taps[r];
    const double* lo = sd.data() + t.lo * width;
    const double* hi = sd.data() + t.hi * width;
    double* o = out.data() + r * width;
    for (std::size_t j = 0; j < width; ++j) o[j] = t.w_lo * lo[j] + t.w_hi * hi[j];
  }
  return make_op_result({taps.size(), width}, std::move(out), {src}, [taps, width](detail::Node& self) {
    auto* gs = grad_of(self, 0);
    if (!gs) return;
    for (std::size_t r = 0; r < taps.size(); ++r) {
      const auto& t = taps[r];
      const double* g = self.grad.data() + r * width;
      double* lo = gs->data() + t.lo * width;
      double* hi = gs->data() + t.hi * width;
      for (std::size_t j = 0; j < width; ++j) {
        lo[j] += t.w_lo * g[j];
        hi[j] += t.w_hi * g[j];
      }
    }
  });
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
  if (!(eps > 0)) throw std::invalid_argument("grad_check: eps must be positive");
  Tensor probe = Tensor::from_data(x.shape(), std::vector<double>(x.data().begin(), x.data().end()), true);
  Tensor out = f(probe);
  if (out.numel() != 1) throw std::invalid_argument("grad_check: f must be scalar-valued");
  if (!std::isfinite(out.item())) throw std::domain_error("grad_check: f(x) is not finite");
  out.backward();
  std::vector<double> analytic(probe.grad().begin(), probe.grad().end());

  NoGradGuard no_grad;
  double worst = 0.0;
  auto values = probe.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double orig = values[i];
    values[i] = orig + eps;
    const double up = f(probe).item();
    values[i] = orig - eps;
    const double down = f(probe).item();
    values[i] = orig;
    const double numeric = (up - down) / (2.0 * eps);
    const double err = std::abs(analytic[i] - numeric) / std::max(1e-12, std::abs(analytic[i]) + std::abs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace talforge
