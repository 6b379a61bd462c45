#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace talforge {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class Tensor;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this->grad and accumulates into inputs[i]->grad for inputs that
  // require grad. Empty for leaves.
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return inputs.empty(); }
};

}  // namespace detail

/// Dense row-major double tensor with reverse-mode autodiff.
///
/// Copies share the underlying node, so a Tensor behaves like a handle.
/// `grad` is allocated iff `requires_grad`. Leaves accumulate gradients
/// across backward() calls until zero_grad(); intermediate buffers are reset
/// at the start of each backward().
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Mutable access for initializers and optimizers. Callers must not mutate
  /// a tensor that still has a pending backward pass.
  std::span<double> mutable_data();
  std::span<const double> grad() const;
  std::span<double> mutable_grad();

  bool requires_grad() const;
  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t i, std::size_t j) const;

  void backward() const;
  void zero_grad();
  /// Same values, cut from the graph.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op_result(Shape, std::vector<double>, std::vector<Tensor>,
                               std::function<void(detail::Node&)>);
};

/// Builds a graph node from already-computed values. `backward_fn` is only
/// retained when gradient recording is enabled and some input requires grad.
Tensor make_op_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                      std::function<void(detail::Node&)> backward_fn);

bool grad_enabled();

/// Disables graph construction on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace talforge
