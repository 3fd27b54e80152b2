#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "blindsnf/tensor.hpp"

namespace blindsnf {

namespace detail {

template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Receives d(root)/d(value) and accumulates into the parents' grads.
  std::function<void(const Tensor<Scalar>&)> backward;

  Tensor<Scalar>& grad_buffer() {
    if (grad.empty()) grad = Tensor<Scalar>(value.shape());
    return grad;
  }
};

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Handle to a value in the reverse-mode graph.
///
/// Copies share the underlying node, so a parameter registered in several
/// places is still one parameter. Leaf variables created with
/// `requires_grad = true` accumulate gradients across backward() calls until
/// zero_grad().
template <typename Scalar>
class Var {
 public:
  using NodePtr = std::shared_ptr<detail::Node<Scalar>>;

  Var() = default;

  explicit Var(Tensor<Scalar> value, bool requires_grad = false) : node_(std::make_shared<detail::Node<Scalar>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Var from_node(NodePtr node) {
    Var v;
    v.node_ = std::move(node);
    return v;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<Scalar>& value() const { return node_->value; }
  Tensor<Scalar>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  Index dim(Index axis) const { return node_->value.dim(axis); }
  Index size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }

  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient, or zeros if nothing has flowed in yet.
  Tensor<Scalar> grad() const { return has_grad() ? node_->grad : Tensor<Scalar>(shape()); }
  void zero_grad() { node_->grad = Tensor<Scalar>(); }

  /// Same value, cut from the graph.
  Var detach() const { return Var(node_->value, false); }

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Creates an op result. `backward_fn(grad_out)` is attached only when
/// recording is enabled and at least one input requires a gradient.
template <typename Scalar, typename Backward>
Var<Scalar> make_op(Tensor<Scalar> value, std::initializer_list<Var<Scalar>> inputs, Backward&& backward_fn) {
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  Var<Scalar> out(std::move(value), needs);
  if (needs) {
    auto& node = *out.node();
    for (const auto& in : inputs) node.parents.push_back(in.node());
    node.backward = std::forward<Backward>(backward_fn);
  }
  return out;
}

/// Accumulates `root`'s gradient into every reachable leaf that requires it.
/// `root` must hold exactly one element.
template <typename Scalar>
void backward(const Var<Scalar>& root) {
  if (root.size() != 1) {
    throw ContractError("backward() needs a scalar root, got shape " + shape_string(root.shape()));
  }
  if (!root.requires_grad()) return;

  using NodeT = detail::Node<Scalar>;
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> visited;
  std::vector<std::pair<NodeT*, std::size_t>> stack{{root.node().get(), 0}};
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodeT* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer().values().setConstant(Scalar(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* node = *it;
    if (!node->backward || node->grad.empty()) continue;
    node->backward(node->grad);
    node->grad = Tensor<Scalar>();  // interior grads are not retained
  }
}

}  // namespace blindsnf
