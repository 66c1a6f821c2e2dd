// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "siamban/tensor.hpp"

namespace siamban {

/// A value in the computation graph. Leaves with requires_grad set are
/// trainable parameters; interior nodes carry a backward closure that
/// pushes their gradient into their inputs.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  /// Gradient buffer, zero-initialized on first use.
  Tensor& grad_buffer();
  bool has_grad() const { return !grad.empty(); }
};

using Var = std::shared_ptr<Node>;

Var make_leaf(Tensor value, bool requires_grad = false);

/// Records interior nodes in creation order so that gradients can be
/// propagated in reverse. A disabled tape turns every op into a pure
/// forward computation.
class Tape {
 public:
  explicit Tape(bool enabled = true) : enabled_(enabled) {}

  bool enabled() const { return enabled_; }

  /// True if `out` should be differentiable given its inputs.
  bool wants_grad(std::initializer_list<const Var*> inputs) const;

  /// Registers an interior node; no-op when the node needs no gradient.
  void record(const Var& node);

  /// Seeds d(loss)/d(node) for each pair and runs the reverse sweep.
  /// Leaf gradients accumulate; interior nodes are released afterwards.
  void backward(const std::vector<std::pair<Var, Tensor>>& seeds);

  std::size_t size() const { return nodes_.size(); }

 private:
  bool enabled_;
  std::vector<Var> nodes_;
};

}  // namespace siamban
