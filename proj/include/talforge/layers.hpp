#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "talforge/rng.hpp"
#include "talforge/tensor.hpp"

namespace talforge {

enum class Activation { kNone, kRelu, kSigmoid };

struct Conv1dParams {
  Tensor weight;  // [C_out x C_in x k]
  Tensor bias;    // [C_out]
  std::size_t padding = 0;
  Activation activation = Activation::kNone;

  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t kernel() const { return weight.dim(2); }
};

struct LinearParams {
  Tensor weight;  // [D x E]
  Tensor bias;    // [E]
};

/// One LSTM direction. Gate blocks are stacked in the order
/// input, forget, cell, output along the 4H axis.
struct LstmDirectionParams {
  Tensor input_weight;      // W [4H x D]
  Tensor recurrent_weight;  // U [4H x H]
  Tensor bias;              // b [4H]
};

struct BiLstmParams {
  LstmDirectionParams forward;
  LstmDirectionParams backward;
  std::size_t hidden = 0;
};

/// Cross-correlation over time with zero padding: x is [C_in x T], output is
/// [C_out x (T + 2*padding - k + 1)].
Tensor conv1d(const Tensor& x, const Conv1dParams& p);

/// Affine map over the trailing axis of x.
Tensor linear(const Tensor& x, const LinearParams& p);

/// x is [T x D]; output row t is [h_fwd(t), h_bwd(t)], shape [T x 2H].
/// Initial hidden and cell states are zero in both directions.
Tensor bilstm(const Tensor& x, const BiLstmParams& p);

/// Unidirectional pass over the rows of x in order; returns [T x H].
Tensor lstm_pass(const Tensor& x, const LstmDirectionParams& p, std::size_t hidden);

// Uniform initialisation in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Conv1dParams make_conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t padding,
                         Activation activation, Rng& rng);
LinearParams make_linear(std::size_t in_features, std::size_t out_features, Rng& rng);
BiLstmParams make_bilstm(std::size_t input_size, std::size_t hidden, Rng& rng);

LinearParams zero_linear(std::size_t in_features, std::size_t out_features);

/// Ordered, named collection of trainable tensors. Entries share storage
/// with the layer structs they were registered from.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
  };

  void add(std::string name, Tensor tensor);
  void add(const std::string& prefix, const Conv1dParams& p);
  void add(const std::string& prefix, const LinearParams& p);
  void add(const std::string& prefix, const BiLstmParams& p);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  const Tensor& get(const std::string& name) const;
  std::size_t size() const { return entries_.size(); }
  std::size_t total_elements() const;

  void zero_grad();

 private:
  std::vector<Entry> entries_;
};

}  // namespace talforge
