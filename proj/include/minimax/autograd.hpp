#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "minimax/tensor.hpp"

namespace minimax {

template <typename Scalar>
class Var;

namespace detail {

template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;  // lazily allocated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Receives this node's accumulated gradient and pushes contributions to parents.
  std::function<void(const Tensor<Scalar>&)> backward;
};

}  // namespace detail

// Handle to a value in a dynamically built computation graph. Copies share the
// node. Leaves created with parameter() accumulate gradients across backward()
// calls until zero_grad().
template <typename Scalar>
class Var {
 public:
  using Node = detail::Node<Scalar>;

  Var() = default;

  static Var constant(Tensor<Scalar> value) {
    Var v;
    v.node_ = std::make_shared<Node>();
    v.node_->value = std::move(value);
    return v;
  }

  static Var parameter(Tensor<Scalar> value) {
    Var v = constant(std::move(value));
    v.node_->requires_grad = true;
    return v;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<Scalar>& value() const { return node_->value; }
  Tensor<Scalar>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return !node_->grad.empty(); }
  // Gradient, or zeros of the value's shape when nothing was accumulated.
  Tensor<Scalar> grad() const {
    return has_grad() ? node_->grad : Tensor<Scalar>(node_->value.shape());
  }
  void zero_grad() { node_->grad = Tensor<Scalar>(); }

  void accumulate_grad(const Tensor<Scalar>& g) const {
    if (!requires_grad()) return;
    if (node_->grad.empty()) {
      node_->grad = g;
    } else {
      node_->grad += g;
    }
  }

  // A constant holding the same value; gradients stop here.
  Var detach() const { return constant(node_->value); }

  void backward() const {
    if (value().size() != 1) throw ContractError("backward() without seed needs a scalar");
    backward(Tensor<Scalar>::constant(value().shape(), Scalar(1)));
  }

  void backward(const Tensor<Scalar>& seed) const {
    if (!requires_grad()) return;
    value().require_same_shape(seed, "backward seed");
    std::vector<Node*> order;
    topo_sort(order);
    accumulate_grad(seed);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backward && !n->grad.empty()) n->backward(n->grad);
    }
    // Release intermediate gradients; leaves keep theirs.
    for (Node* n : order) {
      if (n->backward) n->grad = Tensor<Scalar>();
    }
  }

  // Builds an interior node. `fn` is only retained when some input needs a gradient.
  static Var make(Tensor<Scalar> value, std::vector<Var> inputs,
                  std::function<void(const Tensor<Scalar>&)> fn) {
    Var out = constant(std::move(value));
    for (const Var& in : inputs) {
      if (in.requires_grad()) {
        out.node_->requires_grad = true;
        break;
      }
    }
    if (out.node_->requires_grad) {
      for (Var& in : inputs) {
        if (in.requires_grad()) out.node_->parents.push_back(std::move(in.node_));
      }
      out.node_->backward = std::move(fn);
    }
    return out;
  }

 private:
  void topo_sort(std::vector<Node*>& order) const {
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node* p = n->parents[next++].get();
        if (seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<Node> node_;
};

}  // namespace minimax
