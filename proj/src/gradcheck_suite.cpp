#include "aastereo/gradcheck_suite.hpp"

#include <cmath>
#include <map>
#include <random>

#include "aastereo/cost_volume.hpp"
#include "aastereo/cross_scale.hpp"
#include "aastereo/disparity_head.hpp"
#include "aastereo/intra_scale.hpp"
#include "aastereo/model.hpp"
#include "aastereo/ops.hpp"

namespace aastereo {

namespace {

// Operator over `data` inputs followed by every tensor of a parameter
// struct (in visit order). Gradients reach the parameters through a
// ParamBinder, exactly as in the model.
template <typename Params>
DifferentiableOp param_op(
    std::string name, Params prototype, std::size_t data_inputs,
    std::function<Var(ParamBinder&, const Params&, std::span<const Var>)> build) {
  auto run = [prototype, data_inputs, build](std::span<const Tensor> inputs, const Tensor* cotangent) {
    Params params = prototype;
    std::size_t i = data_inputs;
    std::vector<Tensor*> slots;
    params.visit("p", [&](const std::string&, Tensor& t) {
      t = inputs[i++];
      slots.push_back(&t);
    });
    Tape tape;
    ParamBinder binder(tape, cotangent != nullptr);
    std::vector<Var> vars;
    for (std::size_t k = 0; k < data_inputs; ++k) {
      vars.push_back(cotangent ? tape.variable(inputs[k]) : tape.constant(inputs[k]));
    }
    const Var out = build(binder, params, vars);
    std::vector<Tensor> result;
    if (!cotangent) {
      result.push_back(tape.value(out));
      return result;
    }
    tape.backward(out, *cotangent);
    for (Var v : vars) result.push_back(tape.grad(v));
    for (Tensor* t : slots) result.push_back(binder.grad(*t));
    return result;
  };
  DifferentiableOp op;
  op.name = std::move(name);
  op.forward = [run](std::span<const Tensor> inputs) { return run(inputs, nullptr).front(); };
  op.vjp = [run](std::span<const Tensor> inputs, const Tensor& cotangent) {
    return run(inputs, &cotangent);
  };
  return op;
}

template <typename Params>
std::vector<Tensor> param_inputs(Params params) {
  std::vector<Tensor> out;
  params.visit("p", [&](const std::string&, Tensor& t) { out.push_back(t); });
  return out;
}

// Random values whose fractional part stays in [0.2, 0.8].
Tensor off_lattice(const Shape& shape, double lo, double hi, std::mt19937_64& rng) {
  Tensor t = random_uniform(shape, lo, hi, rng);
  std::uniform_real_distribution<double> frac(0.2, 0.8);
  for (auto& v : t.data()) v = std::floor(v) + frac(rng);
  return t;
}

// Random values with |x| >= margin.
Tensor away_from_zero(const Shape& shape, double margin, double hi, std::mt19937_64& rng) {
  Tensor t = random_uniform(shape, margin, hi, rng);
  std::bernoulli_distribution sign(0.5);
  for (auto& v : t.data()) v = sign(rng) ? v : -v;
  return t;
}

void randomize(ConvLayerParams& conv, double stddev, std::mt19937_64& rng) {
  conv.weight = random_normal(conv.weight.shape(), stddev, rng);
  conv.bias = random_normal(conv.bias.shape(), stddev, rng);
}

GradCheckCase conv2d_case(std::mt19937_64& rng) {
  ConvLayerParams conv = make_conv(2, 3, 3, {2, 1}, rng);
  randomize(conv, 0.5, rng);
  GradCheckCase c{param_op<ConvLayerParams>(
                      "conv2d", conv, 1,
                      [](ParamBinder& p, const ConvLayerParams& l, std::span<const Var> v) {
                        return apply_conv(p, l, v[0]);
                      }),
                  {random_normal({2, 5, 6}, 1.0, rng)},
                  {}};
  for (auto& t : param_inputs(conv)) c.inputs.push_back(t);
  return c;
}

GradCheckCase correlate_case(std::mt19937_64& rng) {
  return {make_tape_op("correlate",
                       [](Tape& t, std::span<const Var> v) { return correlate(t, v[0], v[1], 4); }),
          {random_normal({3, 4, 7}, 1.0, rng), random_normal({3, 4, 7}, 1.0, rng)},
          {}};
}

GradCheckCase bilinear_sample_case(std::mt19937_64& rng) {
  return {make_tape_op("bilinear_sample",
                       [](Tape& t, std::span<const Var> v) { return bilinear_sample(t, v[0], v[1]); }),
          {random_normal({5, 6}, 1.0, rng), off_lattice({2}, 0.5, 3.5, rng)},
          {}};
}

GradCheckCase adaptive_case(std::mt19937_64& rng) {
  const SamplingGrid grid{3, 2, 2};
  AdaptiveAggregationParams layer = make_adaptive_aggregation(4, grid);
  layer.base_weights = random_uniform({grid.points()}, 0.2, 1.0, rng);
  // Generator weights stay small so offsets land between lattice points.
  randomize(layer.offset_generator, 0.15, rng);
  randomize(layer.modulation_generator, 0.5, rng);
  GradCheckCase c{param_op<AdaptiveAggregationParams>(
                      "adaptive_aggregate", layer, 1,
                      [](ParamBinder& p, const AdaptiveAggregationParams& l, std::span<const Var> v) {
                        return adaptive_aggregate(p, l, v[0]);
                      }),
                  {random_normal({4, 5, 6}, 1.0, rng)},
                  {}};
  for (auto& t : param_inputs(layer)) c.inputs.push_back(t);
  return c;
}

GradCheckCase isa_case(std::mt19937_64& rng) {
  const SamplingGrid grid{3, 2, 2};
  IsaBlockParams block = make_isa_block(4, grid);
  randomize(block.reduce, 0.5, rng);
  randomize(block.expand, 0.5, rng);
  block.adaptive.base_weights = random_uniform({grid.points()}, 0.2, 1.0, rng);
  randomize(block.adaptive.offset_generator, 0.1, rng);
  randomize(block.adaptive.modulation_generator, 0.5, rng);
  GradCheckCase c{param_op<IsaBlockParams>(
                      "isa_block", block, 1,
                      [](ParamBinder& p, const IsaBlockParams& b, std::span<const Var> v) {
                        return isa_block(p, b, v[0]);
                      }),
                  {random_normal({4, 5, 6}, 1.0, rng)},
                  {}};
  for (auto& t : param_inputs(block)) c.inputs.push_back(t);
  return c;
}

GradCheckCase csa_case(std::mt19937_64& rng) {
  const std::vector<std::size_t> ds{4, 2, 1};
  CsaParams layer = make_random_csa(ds, rng);
  GradCheckCase c{param_op<CsaParams>(
                      "csa", layer, 3,
                      [](ParamBinder& p, const CsaParams& l, std::span<const Var> v) {
                        Tape& t = p.tape();
                        const auto out = csa(p, l, v);
                        // Flatten every scale into one output vector.
                        std::vector<Var> flat;
                        for (Var o : out) flat.push_back(ops::reshape(t, o, {t.value(o).size()}));
                        return ops::concat(t, flat);
                      }),
                  {random_normal({4, 5, 6}, 1.0, rng), random_normal({2, 3, 3}, 1.0, rng),
                   random_normal({1, 2, 2}, 1.0, rng)},
                  {}};
  for (auto& t : param_inputs(layer)) c.inputs.push_back(t);
  return c;
}

GradCheckCase upsample_case(std::mt19937_64& rng) {
  return {make_tape_op("bilinear_upsample",
                       [](Tape& t, std::span<const Var> v) { return bilinear_upsample(t, v[0], 7, 9); }),
          {random_normal({2, 3, 4}, 1.0, rng)},
          {}};
}

GradCheckCase soft_argmin_case(std::mt19937_64& rng) {
  return {make_tape_op("soft_argmin",
                       [](Tape& t, std::span<const Var> v) { return soft_argmin(t, v[0]); }),
          {random_normal({5, 3, 4}, 1.5, rng)},
          {}};
}

GradCheckCase smooth_l1_case(std::mt19937_64& rng) {
  Tensor x = away_from_zero({4, 5}, 0.05, 3.0, rng);
  for (auto& v : x.data()) {
    if (std::abs(std::abs(v) - 1.0) < 0.05) v *= 1.2;
  }
  return {make_tape_op("smooth_l1", [](Tape& t, std::span<const Var> v) { return smooth_l1(t, v[0]); }),
          {x},
          {}};
}

GradCheckCase masked_loss_case(std::mt19937_64& rng) {
  Tensor mask({4, 5});
  std::bernoulli_distribution keep(0.5);
  for (auto& v : mask.data()) v = keep(rng) ? 1.0 : 0.0;
  const Tensor gt = random_uniform({4, 5}, 0.0, 8.0, rng);
  const Tensor pseudo = random_uniform({4, 5}, 0.0, 8.0, rng);
  // pred = gt-or-pseudo + residual, residuals clear of the smooth-L1 joints.
  Tensor pred = away_from_zero({4, 5}, 0.1, 2.5, rng);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (std::abs(std::abs(pred[i]) - 1.0) < 0.1) pred[i] *= 1.3;
    pred[i] += mask[i] != 0.0 ? gt[i] : pseudo[i];
  }
  return {make_tape_op("masked_loss",
                       [mask](Tape& t, std::span<const Var> v) {
                         return masked_loss(t, v[0], v[1], v[2], mask);
                       }),
          {pred, gt, pseudo},
          {}};
}

GradCheckCase refine_case(std::mt19937_64& rng) {
  RefineParams layer;
  layer.conv1 = make_conv(4, 4, 3, {1, 1}, rng);
  layer.conv2 = make_conv(4, 4, 3, {1, 1}, rng);
  layer.conv3 = make_conv(4, 1, 3, {1, 1}, rng);
  GradCheckCase c{param_op<RefineParams>(
                      "refine", layer, 2,
                      [](ParamBinder& p, const RefineParams& l, std::span<const Var> v) {
                        return refine(p, l, v[0], v[1], 3);
                      }),
                  {random_uniform({3, 4}, 0.0, 4.0, rng), random_normal({3, 8, 11}, 1.0, rng)},
                  {}};
  for (auto& t : param_inputs(layer)) c.inputs.push_back(t);
  return c;
}

using CaseFactory = GradCheckCase (*)(std::mt19937_64&);

const std::map<std::string, CaseFactory>& registry() {
  static const std::map<std::string, CaseFactory> r{
      {"conv2d", conv2d_case},
      {"correlate", correlate_case},
      {"bilinear_sample", bilinear_sample_case},
      {"adaptive_aggregate", adaptive_case},
      {"isa_block", isa_case},
      {"csa", csa_case},
      {"bilinear_upsample", upsample_case},
      {"soft_argmin", soft_argmin_case},
      {"smooth_l1", smooth_l1_case},
      {"masked_loss", masked_loss_case},
      {"refine", refine_case},
  };
  return r;
}

}  // namespace

const std::vector<std::string>& gradcheck_suite_names() {
  static const std::vector<std::string> names{
      "conv2d",      "correlate",  "bilinear_sample", "adaptive_aggregate",
      "isa_block",   "csa",        "bilinear_upsample", "soft_argmin",
      "smooth_l1",   "masked_loss", "refine"};
  return names;
}

GradCheckCase make_gradcheck_case(const std::string& name, std::uint64_t seed) {
  const auto& r = registry();
  const auto it = r.find(name);
  if (it == r.end()) throw std::out_of_range("unknown operator '" + name + "'");
  std::mt19937_64 rng(seed);
  return it->second(rng);
}

}  // namespace aastereo
