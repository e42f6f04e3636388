#pragma once

#include <cstddef>
#include <span>

#include "aastereo/conv.hpp"
#include "aastereo/cost_volume.hpp"

namespace aastereo {

// ---------------------------------------------------------------------------
// Window aggregation baseline: C~(d,p) = sum_q w(p,q) C(d,q).

enum class WindowWeighting { kUniform, kGaussian };

enum class BorderMode {
  // Weights are renormalized over the neighbors that fall inside the image.
  kRenormalize,
  // Out-of-image neighbors contribute 0 and weights are left untouched.
  kZero,
};

struct WindowAggregationParams {
  std::size_t kernel = 3;  // odd
  WindowWeighting weighting = WindowWeighting::kUniform;
  double sigma = 1.0;  // spatial standard deviation in pixels, gaussian only
  std::size_t dilation = 1;
  BorderMode border = BorderMode::kRenormalize;

  // K x K weights, nonnegative, summing to 1.
  Tensor weights() const;
};

Tensor window_aggregate(const Tensor& volume, const WindowAggregationParams& params);
CostVolume window_aggregate(const CostVolume& volume, const WindowAggregationParams& params);

// ---------------------------------------------------------------------------
// Bilinear sampling with zero contribution from out-of-image lattice points.

struct BilinearStencil {
  long y0 = 0;
  long x0 = 0;
  double ly = 0.0;  // fractional parts
  double lx = 0.0;

  BilinearStencil(double y, double x);

  double value(const double* slice, long height, long width) const;
  // d value / d y and d value / d x.
  std::pair<double, double> gradient(const double* slice, long height, long width) const;
  // Adds coef * (d value / d slice) into `grad_slice`.
  void scatter(double* grad_slice, long height, long width, double coef) const;
};

double bilinear_sample(const Tensor& slice, double y, double x);

// `slice` is H x W, `point` holds (y, x); output has shape {1}. Gradients
// flow to the slice values and to both coordinates.
Var bilinear_sample(Tape& tape, Var slice, Var point);

// ---------------------------------------------------------------------------
// Adaptive sparse-point aggregation:
//   C~(d,p) = sum_k w_k * C(d, p + p_k + dp_k) * m_k
// with p_k on an r-dilated K x K grid and (dp_k, m_k) shared inside each of
// G contiguous disparity groups.

struct SamplingGrid {
  std::size_t kernel = 3;
  std::size_t dilation = 2;
  std::size_t groups = 2;

  std::size_t points() const { return kernel * kernel; }
};

// Offset field layout: channel (g * K^2 + k) * 2 holds dy, +1 holds dx.
// Modulation field layout: channel g * K^2 + k.
Tensor deform_aggregate_forward(const Tensor& volume, const Tensor& offsets,
                                const Tensor& modulation, const Tensor& base_weights,
                                const SamplingGrid& grid);

struct DeformAggregateGrads {
  Tensor volume;
  Tensor offsets;
  Tensor modulation;
  Tensor base_weights;
};

DeformAggregateGrads deform_aggregate_backward(const Tensor& volume, const Tensor& offsets,
                                               const Tensor& modulation,
                                               const Tensor& base_weights,
                                               const Tensor& grad_output,
                                               const SamplingGrid& grid);

Var deform_aggregate(Tape& tape, Var volume, Var offsets, Var modulation, Var base_weights,
                     const SamplingGrid& grid);

struct AdaptiveAggregationParams {
  SamplingGrid grid;
  Tensor base_weights;               // K^2, shared by all groups
  ConvLayerParams offset_generator;  // D -> 2 K^2 G
  ConvLayerParams modulation_generator;  // D -> K^2 G, sigmoid-mapped

  void visit(const std::string& prefix, const ParamVisitor& visitor);
};

// Zero generators (dp = 0, m = 0.5) and w_k = 2 / K^2: a box filter at
// initialization.
AdaptiveAggregationParams make_adaptive_aggregation(std::size_t disparities,
                                                    const SamplingGrid& grid);

struct AdaptiveFields {
  Tensor offsets;
  Tensor modulation;
};

AdaptiveFields adaptive_fields(const AdaptiveAggregationParams& params, const Tensor& volume);

Var adaptive_aggregate(ParamBinder& params, const AdaptiveAggregationParams& layer, Var volume);
CostVolume adaptive_aggregate(const AdaptiveAggregationParams& layer, const CostVolume& volume);

// ---------------------------------------------------------------------------
// Bottleneck block: 1x1 conv, adaptive aggregation, 1x1 conv, residual add.
// Channel count stays D throughout.

struct IsaBlockParams {
  ConvLayerParams reduce;
  AdaptiveAggregationParams adaptive;
  ConvLayerParams expand;

  void visit(const std::string& prefix, const ParamVisitor& visitor);
};

// Identity reduce conv and zero expand conv, so the block starts as identity.
IsaBlockParams make_isa_block(std::size_t disparities, const SamplingGrid& grid);

Var isa_block(ParamBinder& params, const IsaBlockParams& block, Var volume);

}  // namespace aastereo
