#include "au2av/autograd/var.hpp"

#include <unordered_set>

#include "au2av/error.hpp"

namespace au2av::ag {

Tensor& Node::grad_buffer() {
  if (grad.shape() != value.shape() || grad.numel() != value.numel()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Var::set_requires_grad(bool flag) {
  if (!node_->inputs.empty()) throw ValidationError("set_requires_grad on a non-leaf variable");
  node_->requires_grad = flag;
}

Tensor Var::grad() const {
  if (node_->grad.numel() == node_->value.numel() && node_->grad.shape() == node_->value.shape()) return node_->grad;
  return Tensor(node_->value.shape(), 0.0);
}

void Var::zero_grad() { node_->grad = Tensor(); }

Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (any) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(node));
}

void backward(const Var& root) {
  if (!root.defined() || root.numel() != 1) throw ValidationError("backward() needs a single-element root");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->backward_fn) continue;
    if (node->grad.numel() == node->value.numel() && node->grad.shape() == node->value.shape())
      node->backward_fn(*node);
    node->grad = Tensor();  // intermediate; leaves have no backward_fn
  }
}

Var detach(const Var& x) { return Var(x.value(), false); }

}  // namespace au2av::ag
