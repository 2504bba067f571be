#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace orthoview::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a backward pass reaches the node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Adds d(root)/d(parent) into each parent's grad, reading this node's grad.
  std::function<void()> backward;
};

namespace detail {
inline bool& grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled_flag()) { detail::grad_enabled_flag() = false; }
  ~NoGradGuard() { detail::grad_enabled_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Shared handle to a node of the computation graph. Copies alias the same
// storage; use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->value.assign(nn::numel(shape), 0.0);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
    if (nn::numel(shape) != values.size())
      throw ShapeError("tensor: " + std::to_string(values.size()) + " values do not fill shape " + shape_str(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor scalar(double v, bool requires_grad = false) { return from({1}, {v}, requires_grad); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<double> values() { return node_->value; }
  std::span<const double> values() const { return node_->value; }
  double item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<double> grad() { return node_->grad; }
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

  Tensor clone() const { return from(shape(), node_->value, requires_grad()); }
  // Same values, cut from the graph.
  Tensor detach() const { return from(shape(), node_->value, false); }

  // Reverse-mode sweep from a scalar. Leaf gradients accumulate; call
  // zero_grad() on parameters between steps.
  void backward() const {
    if (numel() != 1) throw ShapeError("backward() needs a scalar, got " + shape_str(shape()));
    if (!requires_grad()) throw std::logic_error("backward() on a tensor that does not require grad");
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    // Iterative post-order DFS.
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node* p = n->parents[next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    for (Node* n : order) {
      if (n->parents.empty()) {
        if (n->grad.size() != n->value.size()) n->grad.assign(n->value.size(), 0.0);
      } else {
        n->grad.assign(n->value.size(), 0.0);
      }
    }
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
      if ((*it)->backward) (*it)->backward();
  }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<Node> node_;
};

// Allocates an op result; records parents only when grad recording is on and
// some parent requires grad.
inline Tensor make_result(Shape shape, std::initializer_list<Tensor> inputs) {
  Tensor out = Tensor::zeros(std::move(shape));
  if (!grad_enabled()) return out;
  bool needs = false;
  for (const Tensor& t : inputs) needs = needs || (t.defined() && t.requires_grad());
  if (!needs) return out;
  Node* n = out.node();
  n->requires_grad = true;
  for (const Tensor& t : inputs)
    if (t.defined()) n->parents.push_back(t.node_ptr());
  return out;
}

}  // namespace orthoview::nn
