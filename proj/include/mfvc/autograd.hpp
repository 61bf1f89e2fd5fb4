/* Copyright 2026 The MFVC Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mfvc/tensor.hpp"

namespace mfvc {

namespace detail {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Pushes this->grad into the parents' grads.
  std::function<void(Node&)> backward;

  void accumulate(const Tensor<T>& g) {
    if (!requires_grad) return;
    if (grad.empty()) {
      grad = g;
    } else {
      grad.flat() += g.flat();
    }
  }
  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

}  // namespace detail

// Handle to a value in a recorded computation. Copies share the node.
template <typename T>
class Var {
 public:
  using Node = detail::Node<T>;

  Var() = default;

  static Var parameter(Tensor<T> value) {
    Var v;
    v.node_ = std::make_shared<Node>();
    v.node_->value = std::move(value);
    v.node_->requires_grad = true;
    return v;
  }
  static Var constant(Tensor<T> value) {
    Var v;
    v.node_ = std::make_shared<Node>();
    v.node_->value = std::move(value);
    return v;
  }

  // Result of an op. The backward closure is dropped when no parent needs
  // a gradient, so inference builds no graph.
  static Var from_op(Tensor<T> value, std::vector<Var> parents,
                     std::function<void(Node&)> backward) {
    Var v;
    v.node_ = std::make_shared<Node>();
    v.node_->value = std::move(value);
    for (const auto& p : parents) {
      if (p.requires_grad()) v.node_->requires_grad = true;
    }
    if (v.node_->requires_grad) {
      for (auto& p : parents) v.node_->parents.push_back(p.node_);
      v.node_->backward = std::move(backward);
    }
    return v;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  // Gradient, or zeros when nothing has flowed in yet.
  Tensor<T> grad() const {
    return node_->grad.empty() ? Tensor<T>(node_->value.shape()) : node_->grad;
  }
  void zero_grad() { node_->grad = Tensor<T>(); }

  // Detached copy of the value (no gradient).
  Var detach() const { return constant(node_->value); }

  Node* node() const { return node_.get(); }

 private:
  std::shared_ptr<Node> node_;
};

// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
// participating node that requires one.
template <typename T>
void backward(const Var<T>& loss) {
  if (loss.value().size() != 1) {
    throw ShapeError("backward requires a scalar loss, got " + loss.shape().str());
  }
  if (!loss.requires_grad()) return;
  using Node = detail::Node<T>;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node(), 0}};
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Tensor<T> seed(loss.shape(), T(1));
  loss.node()->accumulate(seed);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

}  // namespace mfvc
