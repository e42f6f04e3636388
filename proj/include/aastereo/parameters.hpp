#pragma once

#include <unordered_map>

#include "aastereo/autodiff.hpp"

namespace aastereo {

// Maps parameter tensors owned by a model onto tape leaves for one forward
// pass. Each tensor is copied onto the tape once, on first use; with
// `trainable` false the leaves are constants and no backward state is kept.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, bool trainable) : tape_(tape), trainable_(trainable) {}

  Var operator()(const Tensor& param);
  // Gradient accumulated for `param`, zeros if it was never bound.
  Tensor grad(const Tensor& param) const;

  Tape& tape() { return tape_; }
  bool trainable() const { return trainable_; }

 private:
  Tape& tape_;
  bool trainable_;
  std::unordered_map<const Tensor*, Var> vars_;
};

}  // namespace aastereo
