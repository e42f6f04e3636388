#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "aastereo/tensor.hpp"

namespace aastereo {

// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

// Vector-Jacobian product of one recorded operation. Receives the cotangent
// of the op output and a flag per input telling whether that input needs a
// gradient; returns one tensor per input (an empty Tensor means "no
// contribution").
using BackwardFn =
    std::function<std::vector<Tensor>(const Tensor& grad_output, const std::vector<bool>& needs)>;

// Reverse-mode tape over the fixed operator set of this library. Single
// owner; not shared between threads. Recorded backward functions may refer
// back to the tape, so it is neither copyable nor movable.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);

  // Appends an op result. When no input requires a gradient the backward
  // function is dropped and the result is recorded as a constant.
  Var record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  const std::string& op_name(Var v) const { return nodes_.at(v.id).op; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds `output` with `seed` and replays the recorded ops in reverse,
  // accumulating into every variable reachable from it. Gradients from
  // earlier backward calls are kept; call zero_grad() to reset.
  void backward(Var output, const Tensor& seed);
  // Scalar output, seed 1.
  void backward(Var output);

  // Accumulated gradient of a leaf (variable), or zeros shaped like the
  // value if none arrived. Intermediate results do not retain gradients.
  Tensor grad(Var v) const;
  void zero_grad();

 private:
  struct Node {
    std::string op;
    Tensor value;
    std::vector<Var> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    Tensor grad;
  };

  // deque keeps value references stable while new nodes are appended.
  std::deque<Node> nodes_;
};

}  // namespace aastereo
