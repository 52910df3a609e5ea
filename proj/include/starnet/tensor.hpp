#pragma once

// Dense tensors with tape-free reverse-mode differentiation. Every op that
// touches a tensor requiring a gradient records its parents and a backward
// closure on the result node; backward() walks the reachable graph in
// reverse topological order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "starnet/errors.hpp"

namespace starnet {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  bool backward_done = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  // Multiplier applied by parameterized ops to the gradient they write into
  // this node. Always 1 outside of the gradcheck harness's fault-injection tests.
  T grad_scale = T(1);

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

template <typename T>
class BasicTensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<Node<T>>;

  BasicTensor() = default;
  explicit BasicTensor(NodePtr node) : node_(std::move(node)) {}

  static BasicTensor zeros(Shape shape, bool requires_grad = false) {
    for (int d : shape) STARNET_EXPECT(d > 0, "tensor dimensions must be positive, got " + shape_str(shape));
    auto node = std::make_shared<Node<T>>();
    node->data.assign(shape_numel(shape), T(0));
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    return BasicTensor(std::move(node));
  }

  static BasicTensor full(Shape shape, T value, bool requires_grad = false) {
    auto t = zeros(std::move(shape), requires_grad);
    std::fill(t.node_->data.begin(), t.node_->data.end(), value);
    return t;
  }

  static BasicTensor from_data(Shape shape, std::vector<T> values, bool requires_grad = false) {
    STARNET_EXPECT(shape_numel(shape) == values.size(),
                   "data length " + std::to_string(values.size()) + " does not match shape " + shape_str(shape));
    auto t = zeros(std::move(shape), requires_grad);
    t.node_->data = std::move(values);
    return t;
  }

  static BasicTensor scalar(T value, bool requires_grad = false) { return from_data({1}, {value}, requires_grad); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  std::vector<T>& storage() { return node_->data; }
  const std::vector<T>& storage() const { return node_->data; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<T> grad() { return node_->grad; }
  std::span<const T> grad() const { return node_->grad; }

  bool requires_grad() const { return node_->requires_grad; }
  const char* op() const { return node_->op; }
  T item() const {
    STARNET_EXPECT(numel() == 1, "item() needs a single-element tensor, got " + shape_str(shape()));
    return node_->data[0];
  }

  // Allocates (or clears) the gradient buffer.
  void zero_grad() { node_->grad.assign(node_->data.size(), T(0)); }

  // Same values, no history.
  BasicTensor detach() const { return from_data(shape(), node_->data, false); }

  Node<T>& node() const { return *node_; }
  const NodePtr& node_ptr() const { return node_; }
  bool same_node(const BasicTensor& other) const { return node_ == other.node_; }

 private:
  NodePtr node_;
};

using Tensor = BasicTensor<float>;

namespace detail {
inline bool& grad_disabled() {
  thread_local bool off = false;
  return off;
}
}  // namespace detail

// While alive, ops on this thread record no history, so intermediate results
// are freed as soon as they go out of scope. Used for evaluation.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_disabled()) { detail::grad_disabled() = true; }
  ~NoGradGuard() { detail::grad_disabled() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Creates the result node of an op. The backward closure is attached only if
// some parent participates in differentiation.
template <typename T>
BasicTensor<T> make_result(const char* op, Shape shape, std::vector<T> values,
                           std::vector<std::shared_ptr<Node<T>>> parents,
                           std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->op = op;
  node->shape = std::move(shape);
  node->data = std::move(values);
  bool any = false;
  if (!detail::grad_disabled())
    for (const auto& p : parents) any = any || p->requires_grad;
  if (any) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return BasicTensor<T>(std::move(node));
}

namespace detail {

template <typename T>
std::vector<Node<T>*> topo_order(Node<T>* root) {
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  // Iterative DFS; the graphs get deep enough to worry about recursion.
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // parents before children
}

}  // namespace detail

// Accumulates d(loss)/d(x) into the grad buffer of every reachable tensor.
// Gradients add up across calls on distinct graphs, so callers zero parameter
// gradients between optimizer steps. Running backward twice over the same
// graph is rejected.
template <typename T>
void backward(const BasicTensor<T>& loss) {
  STARNET_EXPECT(loss.defined() && loss.numel() == 1,
                 "backward() needs a scalar loss, got " + (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  Node<T>& root = loss.node();
  STARNET_EXPECT(!root.backward_done, "backward() already ran on this graph");
  root.backward_done = true;
  if (!root.requires_grad) return;
  auto order = detail::topo_order(&root);
  root.ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

// Returns the op name of the first node (in evaluation order) holding a
// non-finite value, or an empty string.
template <typename T>
std::string first_non_finite(const BasicTensor<T>& out) {
  auto finite = [](const Node<T>& n) {
    return std::all_of(n.data.begin(), n.data.end(), [](T v) { return std::isfinite(v); });
  };
  // Walk every ancestor, not just differentiable ones.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{&out.node(), 0}};
  seen.insert(&out.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node<T>* n : order)
    if (!finite(*n)) return std::string(n->op) + " " + shape_str(n->shape);
  return {};
}

}  // namespace starnet
