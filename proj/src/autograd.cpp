// SPDX-License-Identifier: Apache-2.0
#include "siamban/autograd.hpp"

#include <stdexcept>

namespace siamban {

Tensor& Node::grad_buffer() {
  if (grad.empty() && !value.empty()) grad = Tensor(value.shape(), 0.0f);
  return grad;
}

Var make_leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

bool Tape::wants_grad(std::initializer_list<const Var*> inputs) const {
  if (!enabled_) return false;
  for (const Var* v : inputs) {
    if (v && *v && (*v)->requires_grad) return true;
  }
  return false;
}

void Tape::record(const Var& node) {
  if (enabled_ && node->requires_grad) nodes_.push_back(node);
}

void Tape::backward(const std::vector<std::pair<Var, Tensor>>& seeds) {
  for (const auto& [node, g] : seeds) {
    if (!node->requires_grad) continue;
    if (!g.same_shape(node->value)) {
      throw std::invalid_argument("gradient seed shape " + g.shape_string() + " does not match value " +
                                  node->value.shape_string());
    }
    Tensor& buf = node->grad_buffer();
    for (std::size_t k = 0; k < buf.size(); ++k) buf[k] += g[k];
  }
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (n.has_grad() && n.backward) n.backward(n);
    // Interior activations and their gradients are no longer needed.
    n.grad = Tensor();
    n.backward = nullptr;
    n.inputs.clear();
  }
  nodes_.clear();
}

}  // namespace siamban
