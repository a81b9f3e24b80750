#include <string>

#include "seqrec/autodiff.hpp"
#include "seqrec/errors.hpp"

namespace seqrec::numerics {

const Tensor& Var::value() const { return tape->value(id); }
bool Var::requires_grad() const { return tape->requires_grad(id); }

const Tensor& Gradients::operator[](Var leaf) const { return at(leaf.id); }

const Tensor& Gradients::at(std::size_t leaf_id) const {
  auto it = by_leaf_.find(leaf_id);
  if (it == by_leaf_.end()) {
    throw ContractError("no gradient recorded for leaf " + std::to_string(leaf_id));
  }
  return it->second;
}

Var Tape::push(std::unique_ptr<Node> node) {
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  auto node = std::make_unique<Node>();
  node->owned = std::move(value);
  node->value = &node->owned;
  node->requires_grad = requires_grad;
  node->is_leaf = true;
  return push(std::move(node));
}

Var Tape::borrow(const Tensor& value, bool requires_grad) {
  auto node = std::make_unique<Node>();
  node->value = &value;
  node->requires_grad = requires_grad;
  node->is_leaf = true;
  return push(std::move(node));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  auto node = std::make_unique<Node>();
  node->owned = std::move(value);
  node->value = &node->owned;
  for (const Var& in : inputs) {
    if (in.tape != this) throw ContractError("primitive mixes variables from different tapes");
    if (nodes_[in.id]->requires_grad) node->requires_grad = true;
  }
  if (node->requires_grad) node->backward = std::move(backward);
  return push(std::move(node));
}

Tensor& Tape::grad_accumulator(std::size_t id) {
  Node& node = *nodes_[id];
  if (node.grad.empty()) node.grad = Tensor::zeros_like(*node.value);
  return node.grad;
}

Gradients Tape::backward(Var loss) {
  if (loss.tape != this) throw ContractError("loss does not belong to this tape");
  if (value(loss.id).size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        to_string(value(loss.id).shape()));
  }
  Gradients out;
  if (nodes_[loss.id]->requires_grad) {
    grad_accumulator(loss.id)[0] = 1.0;
    for (std::size_t id = loss.id + 1; id-- > 0;) {
      Node& node = *nodes_[id];
      if (node.backward && !node.grad.empty()) node.backward(*this, id);
    }
  }
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    Node& node = *nodes_[id];
    if (!node.is_leaf || !node.requires_grad) continue;
    out.by_leaf_.emplace(id, node.grad.empty() ? Tensor::zeros_like(*node.value)
                                               : std::move(node.grad));
  }
  clear();
  return out;
}

}  // namespace seqrec::numerics
