#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aastereo/autodiff.hpp"

namespace aastereo {

// H x W disparities in pixels plus an optional H x W validity mask of 0/1
// values (empty mask means every pixel is valid).
struct DisparityMap {
  Tensor disparity;
  Tensor mask{};

  std::size_t height() const { return disparity.dim(0); }
  std::size_t width() const { return disparity.dim(1); }
  bool has_mask() const { return !mask.empty(); }
  bool valid(std::size_t i) const { return mask.empty() || mask[i] != 0.0; }
  std::size_t valid_count() const;
};

// d(p) = sum_d d * softmax_d(c(p)); volume is D x H x W, output H x W.
Tensor soft_argmin_forward(const Tensor& volume);
Tensor soft_argmin_backward(const Tensor& volume, const Tensor& grad_output);
Var soft_argmin(Tape& tape, Var volume);
DisparityMap soft_argmin(const Tensor& volume);

// 0.5 x^2 for |x| < 1, |x| - 0.5 otherwise.
double smooth_l1(double x);
double smooth_l1_derivative(double x);
// Elementwise over a tensor of residuals.
Var smooth_l1(Tape& tape, Var residual);

// Mean over pixels of V * L(pred - gt) + (1 - V) * L(pred - pseudo), where
// V is gt's mask. Without a pseudo map the second term is dropped and the
// mean runs over valid pixels only. All maps must share one shape; pred is
// expected at the gt resolution already. Terms a pixel does not select are
// skipped outright, so their gradients are exact zeros.
Var masked_loss(Tape& tape, Var pred, Var gt, std::optional<Var> pseudo, const Tensor& mask);
double masked_loss(const Tensor& pred, const DisparityMap& gt,
                   const std::optional<Tensor>& pseudo = std::nullopt);

struct LossWeights {
  std::vector<double> values;

  // Ordered finest to coarsest. Everything gets 1 except the two coarsest
  // predictions, which get 2/3 and 1/3 (with five predictions this is
  // 1, 1, 1, 2/3, 1/3).
  static LossWeights defaults(std::size_t predictions);
};

// sum_i lambda_i * L_i; rejects count mismatch and negative weights.
double total_loss(std::span<const double> losses, const LossWeights& weights);
Var total_loss(Tape& tape, std::span<const Var> losses, const LossWeights& weights);

struct MetricsReport {
  double epe = 0.0;                 // pixels
  double over_1px = 0.0;            // percent
  double d1 = 0.0;                  // percent, error > 3 px and > 5% of gt
  std::size_t evaluated_pixels = 0;

  // key=value lines.
  std::string to_text() const;
  // Single tab-separated line of the same key=value pairs.
  std::string to_line() const;
};

// Metrics over gt-valid pixels; throws EmptyEvaluationError when none.
MetricsReport evaluate(const Tensor& pred, const DisparityMap& gt);

}  // namespace aastereo
