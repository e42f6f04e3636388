#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "aastereo/autodiff.hpp"
#include "aastereo/tensor.hpp"

namespace aastereo {

// A differentiable operator seen as a pure function of its inputs together
// with its vector-Jacobian product.
struct DifferentiableOp {
  std::string name;
  std::function<Tensor(std::span<const Tensor>)> forward;
  std::function<std::vector<Tensor>(std::span<const Tensor>, const Tensor& cotangent)> vjp;
};

// Wraps a function built from tape operations as a DifferentiableOp: every
// input becomes a tape variable and the vjp is a tape replay.
DifferentiableOp make_tape_op(std::string name,
                              std::function<Var(Tape&, std::span<const Var>)> build);

// Vector-Jacobian product of `op` at `inputs`. Rejects a cotangent whose
// shape differs from the op output with a ShapeError naming op and shapes.
std::vector<Tensor> forward_backward(const DifferentiableOp& op, std::span<const Tensor> inputs,
                                     const Tensor& cotangent);

struct GradCheckEntry {
  std::size_t input = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

struct GradCheckReport {
  std::string op;
  double max_relative_error = 0.0;
  // Largest relative error seen for each input tensor.
  std::vector<double> per_input_error;
  // Worst coordinate overall.
  GradCheckEntry worst;
  std::size_t coordinates = 0;
  bool pass = false;
};

struct GradCheckOptions {
  double step = 1e-6;
  double tolerance = 1e-4;
  // Inputs whose index is listed here are held fixed (e.g. integer labels).
  std::vector<std::size_t> skip_inputs;
  std::uint64_t cotangent_seed = 7;
};

// Compares the analytic vjp against central differences
// (f(x+h) - f(x-h)) / 2h, coordinate by coordinate, for a random cotangent.
// Relative error is |a - n| / max(|a|, |n|, 1e-8); a non-finite difference
// counts as an infinite error. Never throws for non-differentiable ops.
GradCheckReport finite_difference_check(const DifferentiableOp& op, std::span<const Tensor> inputs,
                                        const GradCheckOptions& options = {});

}  // namespace aastereo
