#include "talforge/optim.hpp"

#include <cmath>

namespace talforge {

SgdMomentum::SgdMomentum(ParameterSet& params, double learning_rate, double momentum)
    : params_(params), learning_rate_(learning_rate), momentum_(momentum) {
  if (learning_rate < 0) throw std::invalid_argument("learning rate must be >= 0");
  if (momentum < 0 || momentum >= 1) throw std::invalid_argument("momentum must be in [0, 1)");
  for (const auto& e : params_.entries()) velocity_.emplace_back(e.tensor.numel(), 0.0);
}

double SgdMomentum::clip_grad_norm(double max_norm) {
  double sq = 0.0;
  for (const auto& e : params_.entries()) {
    for (double g : e.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& e : params_.entries()) {
      for (auto& g : e.tensor.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

void SgdMomentum::step() {
  auto& entries = params_.entries();
  for (std::size_t k = 0; k < entries.size(); ++k) {
    auto values = entries[k].tensor.mutable_data();
    auto grads = entries[k].tensor.grad();
    auto& v = velocity_[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      v[i] = momentum_ * v[i] + grads[i];
      values[i] -= learning_rate_ * v[i];
    }
  }
}

}  // namespace talforge
