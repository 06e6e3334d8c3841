#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gnnmp/nn/matrix.hpp"

namespace gnnmp::nn {

/// Named tensor owned by a ParameterStore. Buffers (e.g. batch-norm running statistics) are non-trainable.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;
};

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode(); }

/// Disables graph recording in scope; intermediate values are then freed as soon as they go out of use.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  Parameter* param = nullptr;
  std::vector<std::shared_ptr<Node>> parents;
  /// Propagates this node's grad into its parents' grads.
  std::function<void(Node&)> backward;

  Matrix& grad_buffer() {
    if (grad.size() != value.size()) grad = Matrix(value.rows, value.cols);
    return grad;
  }
};

/// Handle to a value in the dynamic reverse-mode graph.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  std::size_t rows() const { return node_->value.rows; }
  std::size_t cols() const { return node_->value.cols; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& ptr() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

inline Var constant(Matrix m) {
  auto n = std::make_shared<Node>();
  n->value = std::move(m);
  return Var(std::move(n));
}

inline Var leaf(Parameter& p) {
  auto n = std::make_shared<Node>();
  n->value = p.value;
  n->param = &p;
  n->requires_grad = p.trainable && grad_enabled();
  return Var(std::move(n));
}

/// Creates an op node. The backward closure and parent links are kept only when some input needs a gradient.
inline Var make_op(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool any = false;
  for (const auto& v : inputs) any = any || v.requires_grad();
  if (any && grad_enabled()) {
    n->requires_grad = true;
    n->parents.reserve(inputs.size());
    for (const auto& v : inputs) n->parents.push_back(v.ptr());
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

/// Reverse sweep from a scalar; parameter gradients are accumulated into Parameter::grad.
inline void backward(const Var& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) throw InvalidInput("backward expects a scalar");
  if (!loss.requires_grad()) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{&loss.node(), 0}};
  seen.insert(&loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node().grad_buffer().data[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() == n->value.size()) n->backward(*n);
    if (n->param && n->grad.size() == n->value.size()) {
      Parameter& p = *n->param;
      if (p.grad.size() != p.value.size()) p.grad = Matrix(p.value.rows, p.value.cols);
      for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad.data[i] += n->grad.data[i];
    }
  }
}

}  // namespace gnnmp::nn
