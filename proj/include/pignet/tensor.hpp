#pragma once

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

#include "pignet/errors.hpp"

namespace pignet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

enum class Mode { train, eval };

namespace detail {

// Recording is on by default; NoGradGuard turns it off for the current thread
// so eval-mode inference builds no backward closures.
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool consumed = false;  // set once backward() has run from this node
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into parents' grad buffers.
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T{0});
  }
};

}  // namespace detail

class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major tensor handle with an attached differentiation record.
///
/// Copies share the underlying node. Values are fixed after construction;
/// only the optimizer writes through mutable_data() on parameter leaves.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor from(Shape shape, std::vector<T> values,
                     bool requires_grad = false) {
    if (shape_size(shape) != values.size()) {
      throw dimension_error("tensor data length " +
                            std::to_string(values.size()) +
                            " does not match shape " + shape_str(shape));
    }
    auto node = std::make_shared<detail::Node<T>>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<T> values(shape_size(shape), T{0});
    return from(std::move(shape), std::move(values), requires_grad);
  }

  static Tensor filled(Shape shape, T value, bool requires_grad = false) {
    std::vector<T> values(shape_size(shape), value);
    return from(std::move(shape), std::move(values), requires_grad);
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return from({}, {value}, requires_grad);
  }

  static Tensor matrix(std::initializer_list<std::initializer_list<T>> rows,
                       bool requires_grad = false) {
    std::vector<T> values;
    std::size_t cols = rows.size() ? rows.begin()->size() : 0;
    for (const auto& r : rows) {
      if (r.size() != cols) throw dimension_error("ragged matrix literal");
      values.insert(values.end(), r.begin(), r.end());
    }
    return from({rows.size(), cols}, std::move(values), requires_grad);
  }

  static Tensor vector(std::initializer_list<T> values,
                       bool requires_grad = false) {
    return from({values.size()}, std::vector<T>(values), requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->data.size(); }
  std::size_t rows() const { return rank() >= 1 ? dim(0) : 1; }
  std::size_t cols() const { return rank() >= 2 ? dim(1) : 1; }

  std::span<const T> data() const { return node_->data; }
  // Parameter-update path only.
  std::span<T> mutable_data() { return node_->data; }

  T item() const {
    if (size() != 1) {
      throw usage_error("item() on non-scalar tensor " + shape_str(shape()));
    }
    return node_->data[0];
  }
  T operator[](std::size_t i) const { return node_->data[i]; }
  T at(std::size_t r, std::size_t c) const {
    return node_->data[r * cols() + c];
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  std::span<const T> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  /// Fresh leaf holding a copy of the values, detached from any graph.
  Tensor detach() const { return from(shape(), node_->data, false); }

  detail::Node<T>* node() const { return node_.get(); }
  const NodePtr& node_ptr() const { return node_; }

 private:
  NodePtr node_;
};

namespace detail {

// Builds an operation output. Parents are only retained (and the backward
// rule only stored) when recording is enabled and some input needs a grad.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values,
                      std::vector<std::shared_ptr<Node<T>>> parents,
                      std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  bool needs = false;
  if (grad_mode()) {
    for (const auto& p : parents) needs = needs || p->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor<T>(std::move(node));
}

}  // namespace detail

/// Reverse-mode sweep from a scalar loss. Each reachable node's backward rule
/// runs exactly once, in reverse topological order; leaf gradients accumulate.
template <typename T>
void backward(const Tensor<T>& loss) {
  auto* root = loss.node();
  if (root == nullptr) throw usage_error("backward on undefined tensor");
  if (loss.size() != 1) {
    throw usage_error("backward seed must be scalar, got shape " +
                      shape_str(loss.shape()));
  }
  if (root->consumed) {
    throw usage_error(
        "backward already ran on this loss; rebuild the graph first");
  }
  if (!root->requires_grad) {
    throw usage_error("loss does not depend on any tensor requiring grad");
  }

  // Iterative post-order DFS gives a topological order.
  std::vector<detail::Node<T>*> order;
  std::unordered_set<detail::Node<T>*> visited;
  std::vector<std::pair<detail::Node<T>*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      auto* parent = node->parents[next++].get();
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* node = *it;
    if (node->backward_fn && node->grad.size() == node->data.size()) {
      node->backward_fn(*node);
    }
  }
  root->consumed = true;
}

}  // namespace pignet
