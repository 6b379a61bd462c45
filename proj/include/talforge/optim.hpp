#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "talforge/layers.hpp"

namespace talforge {

/// Heavy-ball SGD: v <- momentum * v + g;  p <- p - lr * v.
class SgdMomentum {
 public:
  SgdMomentum(ParameterSet& params, double learning_rate, double momentum);

  /// Rescales all gradients so their global L2 norm is at most max_norm
  /// (no-op for max_norm <= 0). Returns the norm before clipping.
  double clip_grad_norm(double max_norm);
  void step();
  void zero_grad() { params_.zero_grad(); }

 private:
  ParameterSet& params_;
  double learning_rate_;
  double momentum_;
  std::vector<std::vector<double>> velocity_;
};

/// Raised when a training loss becomes non-finite.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::size_t epoch) : std::runtime_error(what), epoch_(epoch) {}
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_;
};

}  // namespace talforge
