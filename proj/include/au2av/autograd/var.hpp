#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "au2av/autograd/tensor.hpp"

namespace au2av::ag {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the reverse-mode graph. `backward_fn` reads `grad` and
/// accumulates into the inputs that require gradients.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  std::function<void(Node&)> backward_fn;

  /// Lazily allocates a zero gradient of the value's shape.
  Tensor& grad_buffer();
  bool has_grad() const noexcept { return grad.numel() != 0 || value.numel() == 0; }
};

/// Handle to a graph node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  /// Direct access for optimizers and loaders. Only valid on leaves.
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int dim(int axis) const { return node_->value.dim(axis); }
  std::size_t numel() const { return node_->value.numel(); }
  double item() const { return node_->value.item(); }

  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  void set_requires_grad(bool flag);
  /// Gradient accumulated by backward(); zeros when nothing has flowed in yet.
  Tensor grad() const;
  void zero_grad();

  const NodePtr& node() const noexcept { return node_; }

 private:
  NodePtr node_;
};

/// Creates a result node. When no input requires gradients the node is a
/// constant and the backward function is dropped.
Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn);

/// Reverse pass from a single-element root. Leaf gradients accumulate;
/// intermediate gradients are released once consumed.
void backward(const Var& root);

/// Returns a constant copy of `x` with no history.
Var detach(const Var& x);

}  // namespace au2av::ag
