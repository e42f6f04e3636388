#include "aastereo/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "aastereo/error.hpp"

namespace aastereo {

DifferentiableOp make_tape_op(std::string name,
                              std::function<Var(Tape&, std::span<const Var>)> build) {
  DifferentiableOp op;
  op.name = std::move(name);
  op.forward = [build](std::span<const Tensor> inputs) {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.constant(t));
    return tape.value(build(tape, vars));
  };
  op.vjp = [build](std::span<const Tensor> inputs, const Tensor& cotangent) {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.variable(t));
    Var out = build(tape, vars);
    tape.backward(out, cotangent);
    std::vector<Tensor> grads;
    for (Var v : vars) grads.push_back(tape.grad(v));
    return grads;
  };
  return op;
}

std::vector<Tensor> forward_backward(const DifferentiableOp& op, std::span<const Tensor> inputs,
                                     const Tensor& cotangent) {
  const Tensor out = op.forward(inputs);
  if (out.shape() != cotangent.shape()) {
    throw ShapeError(op.name + ": cotangent shape " + shape_string(cotangent.shape()) +
                     " does not match output shape " + shape_string(out.shape()));
  }
  auto grads = op.vjp(inputs, cotangent);
  if (grads.size() != inputs.size()) {
    throw std::logic_error(op.name + ": vjp returned " + std::to_string(grads.size()) +
                           " gradients for " + std::to_string(inputs.size()) + " inputs");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].empty()) grads[i] = Tensor::zeros_like(inputs[i]);
    if (grads[i].shape() != inputs[i].shape()) {
      throw ShapeError(op.name + ": gradient " + std::to_string(i) + " has shape " +
                       shape_string(grads[i].shape()) + ", input has " +
                       shape_string(inputs[i].shape()));
    }
  }
  return grads;
}

GradCheckReport finite_difference_check(const DifferentiableOp& op, std::span<const Tensor> inputs,
                                        const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw std::invalid_argument("finite_difference_check: step must be > 0");

  GradCheckReport report;
  report.op = op.name;
  report.per_input_error.assign(inputs.size(), 0.0);

  std::vector<Tensor> work(inputs.begin(), inputs.end());
  const Tensor base = op.forward(work);
  std::mt19937_64 rng(options.cotangent_seed);
  const Tensor cotangent = random_uniform(base.shape(), -1.0, 1.0, rng);

  std::vector<Tensor> analytic;
  try {
    analytic = forward_backward(op, work, cotangent);
  } catch (const std::exception&) {
    report.max_relative_error = std::numeric_limits<double>::infinity();
    return report;
  }

  const double h = options.step;
  for (std::size_t in = 0; in < work.size(); ++in) {
    if (std::find(options.skip_inputs.begin(), options.skip_inputs.end(), in) !=
        options.skip_inputs.end()) {
      continue;
    }
    for (std::size_t i = 0; i < work[in].size(); ++i) {
      const double saved = work[in][i];
      work[in][i] = saved + h;
      const Tensor plus = op.forward(work);
      work[in][i] = saved - h;
      const Tensor minus = op.forward(work);
      work[in][i] = saved;

      // Differencing per output element before contracting keeps untouched
      // outputs exactly zero.
      double numeric = 0.0;
      for (std::size_t j = 0; j < plus.size(); ++j) {
        numeric += cotangent[j] * (plus[j] - minus[j]);
      }
      numeric /= 2.0 * h;

      const double a = analytic[in][i];
      double rel;
      if (!std::isfinite(numeric) || !std::isfinite(a)) {
        rel = std::numeric_limits<double>::infinity();
      } else {
        rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      }
      ++report.coordinates;
      report.per_input_error[in] = std::max(report.per_input_error[in], rel);
      if (report.coordinates == 1 || rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst = {in, i, a, numeric, rel};
      }
    }
  }
  report.pass = report.max_relative_error < options.tolerance;
  return report;
}

}  // namespace aastereo
