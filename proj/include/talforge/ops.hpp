#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "talforge/tensor.hpp"

namespace talforge {

enum class ElementwiseKind { kAdd, kMul, kSigmoid, kTanh, kRelu };

/// Dispatches to the named elementwise op. Binary kinds require `b`.
Tensor elementwise(ElementwiseKind kind, const Tensor& a, const std::optional<Tensor>& b = std::nullopt);

// Binary ops broadcast over leading axes only: the lower-rank operand's shape
// must equal the trailing extents of the other.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);
/// Natural log of max(a, floor). The gradient is zero where the floor binds.
Tensor log_clamped(const Tensor& a, double floor = 1e-12);
Tensor smooth_l1(const Tensor& a, double beta = 1.0);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

/// Rows [begin, end) along axis 0.
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
/// Columns [begin, end) of a rank-2 tensor.
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
/// Concatenation of rank-2 tensors with equal row counts along axis 1.
Tensor concat_cols(const std::vector<Tensor>& parts);
/// Stacks rank-1 or [1 x n] tensors into an [k x n] matrix.
Tensor stack_rows(const std::vector<Tensor>& rows);
Tensor reverse_rows(const Tensor& a);

/// One output row as a weighted sum of source rows. Up to two taps per row.
struct RowTaps {
  std::uint32_t lo = 0;
  std::uint32_t hi = 0;
  double w_lo = 0.0;
  double w_hi = 0.0;
};

/// out[r] = w_lo * src[taps[r].lo] + w_hi * src[taps[r].hi] for a rank-2 src.
Tensor gather_rows(const Tensor& src, const std::vector<RowTaps>& taps);

/// Maximum relative error between the analytic gradient of `f` at `x` and
/// central differences with step `eps`.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps = 1e-5);

}  // namespace talforge
