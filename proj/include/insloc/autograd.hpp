/*
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

// Reverse-mode differentiation over a tape recorded during the forward pass.
//
// A Var is a shared handle to a graph node. Leaf Vars created with
// requires_grad=true (parameters) accumulate gradients across backward()
// calls until zero_grad(). Intermediate nodes are released with their
// handles, so each forward pass builds a fresh graph.

#include <functional>
#include <memory>
#include <vector>

#include "insloc/tensor.hpp"

namespace insloc {

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  /// Gradient buffer, allocated as zeros on first use.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  /// Result of a differentiable op. When no parent needs a gradient (or
  /// recording is disabled) the node is created without a backward closure.
  static Var from_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward);

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  const Tensor& grad() const { return node_->grad; }
  void zero_grad();

  /// Backpropagates from this scalar (single-element) result.
  void backward();

  Node* node() const noexcept { return node_.get(); }

 private:
  std::shared_ptr<Node> node_;
};

/// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

}  // namespace insloc
