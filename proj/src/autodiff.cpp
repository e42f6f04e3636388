#include "aastereo/autodiff.hpp"

#include "aastereo/error.hpp"

namespace aastereo {

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{"constant", std::move(value), {}, {}, false, {}});
  return Var{nodes_.size() - 1};
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{"variable", std::move(value), {}, {}, true, {}});
  return Var{nodes_.size() - 1};
}

Var Tape::record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  bool needs_grad = false;
  for (Var in : inputs) {
    if (in.id >= nodes_.size()) throw std::out_of_range(op + ": input refers to unknown node");
    needs_grad = needs_grad || nodes_[in.id].requires_grad;
  }
  if (!needs_grad) {
    inputs.clear();
    backward = nullptr;
  }
  nodes_.push_back(Node{std::move(op), std::move(value), std::move(inputs), std::move(backward),
                        needs_grad, {}});
  return Var{nodes_.size() - 1};
}

void Tape::backward(Var output, const Tensor& seed) {
  const Node& out = nodes_.at(output.id);
  if (seed.shape() != out.value.shape()) {
    throw ShapeError("backward seed " + shape_string(seed.shape()) + " does not match output " +
                     shape_string(out.value.shape()) + " of op " + out.op);
  }
  if (!out.requires_grad) return;

  // Cotangents of this pass only; leaves fold them into their persistent
  // gradient so repeated calls accumulate linearly.
  std::vector<Tensor> pending(output.id + 1);
  pending[output.id] = seed;

  for (std::size_t i = output.id + 1; i-- > 0;) {
    if (pending[i].empty()) continue;
    Node& node = nodes_[i];
    if (!node.backward) {
      if (node.grad.empty()) {
        node.grad = std::move(pending[i]);
      } else {
        node.grad += pending[i];
      }
      continue;
    }

    std::vector<bool> needs(node.inputs.size());
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      needs[k] = nodes_[node.inputs[k].id].requires_grad;
    }
    std::vector<Tensor> input_grads = node.backward(pending[i], needs);
    pending[i] = Tensor();
    if (input_grads.size() != node.inputs.size()) {
      throw std::logic_error(node.op + ": backward returned wrong number of gradients");
    }
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      if (!needs[k] || input_grads[k].empty()) continue;
      const std::size_t in_id = node.inputs[k].id;
      const Node& in = nodes_[in_id];
      if (input_grads[k].shape() != in.value.shape()) {
        throw ShapeError(node.op + ": gradient for input " + std::to_string(k) + " has shape " +
                         shape_string(input_grads[k].shape()) + ", expected " +
                         shape_string(in.value.shape()));
      }
      if (pending[in_id].empty()) {
        pending[in_id] = std::move(input_grads[k]);
      } else {
        pending[in_id] += input_grads[k];
      }
    }
  }
}

void Tape::backward(Var output) {
  backward(output, Tensor(value(output).shape(), 1.0));
}

Tensor Tape::grad(Var v) const {
  const Node& node = nodes_.at(v.id);
  if (node.grad.empty()) return Tensor::zeros_like(node.value);
  return node.grad;
}

void Tape::zero_grad() {
  for (auto& node : nodes_) node.grad = Tensor();
}

}  // namespace aastereo
