#include "aastereo/disparity_head.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "aastereo/error.hpp"
#include "aastereo/ops.hpp"

namespace aastereo {

std::size_t DisparityMap::valid_count() const {
  if (mask.empty()) return disparity.size();
  std::size_t n = 0;
  for (double v : mask.data()) n += v != 0.0;
  return n;
}

// ---------------------------------------------------------------------------

namespace {

// Writes softmax probabilities of column `p` into `prob` and returns the
// expected disparity.
double column_softmax(const double* volume, std::size_t depth, std::size_t plane, std::size_t p,
                      double* prob) {
  double peak = volume[p];
  for (std::size_t d = 1; d < depth; ++d) peak = std::max(peak, volume[d * plane + p]);
  double z = 0.0;
  for (std::size_t d = 0; d < depth; ++d) {
    prob[d] = std::exp(volume[d * plane + p] - peak);
    z += prob[d];
  }
  // Dividing once keeps uniform costs at exactly (depth - 1) / 2.
  double weighted = 0.0;
  for (std::size_t d = 0; d < depth; ++d) {
    weighted += static_cast<double>(d) * prob[d];
    prob[d] /= z;
  }
  return weighted / z;
}

}  // namespace

Tensor soft_argmin_forward(const Tensor& volume) {
  require_rank("soft_argmin", volume, 3);
  const std::size_t depth = volume.dim(0), h = volume.dim(1), w = volume.dim(2);
  const std::size_t plane = h * w;
  Tensor out({h, w});
  std::vector<double> prob(depth);
  for (std::size_t p = 0; p < plane; ++p) {
    out[p] = column_softmax(volume.data().data(), depth, plane, p, prob.data());
  }
  return out;
}

Tensor soft_argmin_backward(const Tensor& volume, const Tensor& grad_output) {
  require_rank("soft_argmin", volume, 3);
  const std::size_t depth = volume.dim(0), h = volume.dim(1), w = volume.dim(2);
  if (grad_output.shape() != Shape{h, w}) {
    throw ShapeError("soft_argmin backward: cotangent " + shape_string(grad_output.shape()) +
                     " does not match " + shape_string({h, w}));
  }
  const std::size_t plane = h * w;
  Tensor grad(volume.shape());
  std::vector<double> prob(depth);
  for (std::size_t p = 0; p < plane; ++p) {
    const double mean = column_softmax(volume.data().data(), depth, plane, p, prob.data());
    for (std::size_t d = 0; d < depth; ++d) {
      grad[d * plane + p] = grad_output[p] * prob[d] * (static_cast<double>(d) - mean);
    }
  }
  return grad;
}

Var soft_argmin(Tape& tape, Var volume) {
  Tensor out = soft_argmin_forward(tape.value(volume));
  return tape.record("soft_argmin", std::move(out), {volume},
                     [&tape, volume](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{soft_argmin_backward(tape.value(volume), g)};
                     });
}

DisparityMap soft_argmin(const Tensor& volume) { return DisparityMap{soft_argmin_forward(volume), {}}; }

// ---------------------------------------------------------------------------

double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

double smooth_l1_derivative(double x) {
  if (x >= 1.0) return 1.0;
  if (x <= -1.0) return -1.0;
  return x;
}

Var smooth_l1(Tape& tape, Var residual) {
  const Tensor& x = tape.value(residual);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = smooth_l1(x[i]);
  return tape.record("smooth_l1", std::move(out), {residual},
                     [&tape, residual](const Tensor& g, const std::vector<bool>&) {
                       const Tensor& x = tape.value(residual);
                       Tensor gx(x.shape());
                       for (std::size_t i = 0; i < x.size(); ++i) {
                         gx[i] = g[i] * smooth_l1_derivative(x[i]);
                       }
                       return std::vector<Tensor>{std::move(gx)};
                     });
}

// ---------------------------------------------------------------------------

namespace {

std::size_t loss_denominator(const Tensor& mask, bool has_pseudo) {
  if (has_pseudo) return mask.size();
  std::size_t n = 0;
  for (double v : mask.data()) n += v != 0.0;
  return n;
}

}  // namespace

Var masked_loss(Tape& tape, Var pred, Var gt, std::optional<Var> pseudo, const Tensor& mask) {
  const Tensor& p = tape.value(pred);
  const Tensor& g = tape.value(gt);
  require_rank("masked_loss", p, 2);
  require_same_shape("masked_loss (pred, gt)", p, g);
  require_same_shape("masked_loss (pred, mask)", p, mask);
  if (pseudo) require_same_shape("masked_loss (pred, pseudo)", p, tape.value(*pseudo));

  const bool has_pseudo = pseudo.has_value();
  const std::size_t count = loss_denominator(mask, has_pseudo);
  if (count == 0) {
    throw std::invalid_argument("masked_loss: no valid ground-truth pixels and no pseudo labels");
  }
  const double inv = 1.0 / static_cast<double>(count);

  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (mask[i] != 0.0) {
      acc += smooth_l1(p[i] - g[i]);
    } else if (has_pseudo) {
      acc += smooth_l1(p[i] - tape.value(*pseudo)[i]);
    }
  }

  std::vector<Var> inputs{pred, gt};
  if (pseudo) inputs.push_back(*pseudo);
  return tape.record(
      "masked_loss", Tensor::scalar(acc * inv), std::move(inputs),
      [&tape, pred, gt, pseudo, mask, inv](const Tensor& grad, const std::vector<bool>& needs) {
        const Tensor& p = tape.value(pred);
        const Tensor& g = tape.value(gt);
        const double scale = grad.item() * inv;
        Tensor gp = Tensor::zeros_like(p), gg = Tensor::zeros_like(p);
        Tensor gs = pseudo ? Tensor::zeros_like(p) : Tensor();
        for (std::size_t i = 0; i < p.size(); ++i) {
          double dl;
          if (mask[i] != 0.0) {
            dl = scale * smooth_l1_derivative(p[i] - g[i]);
            gg[i] = -dl;
          } else if (pseudo) {
            dl = scale * smooth_l1_derivative(p[i] - tape.value(*pseudo)[i]);
            gs[i] = -dl;
          } else {
            continue;
          }
          gp[i] = dl;
        }
        std::vector<Tensor> out{std::move(gp), std::move(gg)};
        if (pseudo) out.push_back(std::move(gs));
        for (std::size_t k = 0; k < out.size(); ++k) {
          if (!needs[k]) out[k] = Tensor();
        }
        return out;
      });
}

double masked_loss(const Tensor& pred, const DisparityMap& gt, const std::optional<Tensor>& pseudo) {
  Tape tape;
  const Tensor mask = gt.has_mask() ? gt.mask : Tensor(gt.disparity.shape(), 1.0);
  std::optional<Var> pseudo_var;
  if (pseudo) pseudo_var = tape.constant(*pseudo);
  Var out = masked_loss(tape, tape.constant(pred), tape.constant(gt.disparity), pseudo_var, mask);
  return tape.value(out).item();
}

// ---------------------------------------------------------------------------

LossWeights LossWeights::defaults(std::size_t predictions) {
  LossWeights w{std::vector<double>(predictions, 1.0)};
  if (predictions >= 3) {
    w.values[predictions - 2] = 2.0 / 3.0;
    w.values[predictions - 1] = 1.0 / 3.0;
  }
  return w;
}

namespace {

void check_weights(std::size_t count, const LossWeights& weights) {
  if (count != weights.values.size()) {
    throw std::invalid_argument("total_loss: " + std::to_string(count) + " losses but " +
                                std::to_string(weights.values.size()) + " weights");
  }
  for (double w : weights.values) {
    if (!(w >= 0.0)) throw std::invalid_argument("total_loss: loss weights must be >= 0");
  }
}

}  // namespace

double total_loss(std::span<const double> losses, const LossWeights& weights) {
  check_weights(losses.size(), weights);
  double acc = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) acc += weights.values[i] * losses[i];
  return acc;
}

Var total_loss(Tape& tape, std::span<const Var> losses, const LossWeights& weights) {
  check_weights(losses.size(), weights);
  if (losses.empty()) throw std::invalid_argument("total_loss: no loss terms");
  Var acc = ops::scale(tape, losses[0], weights.values[0]);
  for (std::size_t i = 1; i < losses.size(); ++i) {
    acc = ops::add(tape, acc, ops::scale(tape, losses[i], weights.values[i]));
  }
  return acc;
}

// ---------------------------------------------------------------------------

std::string MetricsReport::to_text() const {
  std::ostringstream out;
  out << std::setprecision(10);
  out << "epe=" << epe << '\n'
      << "over_1px=" << over_1px << '\n'
      << "d1=" << d1 << '\n'
      << "evaluated_pixels=" << evaluated_pixels << '\n';
  return out.str();
}

std::string MetricsReport::to_line() const {
  std::ostringstream out;
  out << std::setprecision(10);
  out << "epe=" << epe << "\tover_1px=" << over_1px << "\td1=" << d1
      << "\tevaluated_pixels=" << evaluated_pixels;
  return out.str();
}

MetricsReport evaluate(const Tensor& pred, const DisparityMap& gt) {
  require_same_shape("evaluate", pred, gt.disparity);
  MetricsReport r;
  double err_sum = 0.0;
  std::size_t over1 = 0, d1 = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!gt.valid(i)) continue;
    const double err = std::abs(pred[i] - gt.disparity[i]);
    err_sum += err;
    over1 += err > 1.0;
    d1 += err > 3.0 && err > 0.05 * std::abs(gt.disparity[i]);
    ++r.evaluated_pixels;
  }
  if (r.evaluated_pixels == 0) throw EmptyEvaluationError("evaluate: no valid pixels");
  const double n = static_cast<double>(r.evaluated_pixels);
  r.epe = err_sum / n;
  r.over_1px = 100.0 * static_cast<double>(over1) / n;
  r.d1 = 100.0 * static_cast<double>(d1) / n;
  return r;
}

}  // namespace aastereo
