#pragma once

#include <cstddef>
#include <vector>

#include "aastereo/autodiff.hpp"
#include "aastereo/feature_extractor.hpp"

namespace aastereo {

// Matching scores (higher is better) indexed disparity x row x column.
struct CostVolume {
  std::size_t scale = 1;
  Tensor values;

  std::size_t max_disparity() const { return values.dim(0); }
  std::size_t height() const { return values.dim(1); }
  std::size_t width() const { return values.dim(2); }
  // Correlation exists only where the right-image column w - d is in range.
  static bool valid(std::size_t d, std::size_t /*h*/, std::size_t w) { return w >= d; }
};

using CostVolumePyramid = std::vector<CostVolume>;

// C(d,h,w) = <left(:,h,w), right(:,h,w-d)> / N for w >= d, 0 otherwise.
// left/right are N x H x W.
Tensor correlate_forward(const Tensor& left, const Tensor& right, std::size_t max_disparity);

struct CorrelateGrads {
  Tensor left;
  Tensor right;
};
CorrelateGrads correlate_backward(const Tensor& left, const Tensor& right,
                                  const Tensor& grad_output);

Var correlate(Tape& tape, Var left, Var right, std::size_t max_disparity);
CostVolume correlate(const FeatureMap& left, const FeatureMap& right, std::size_t max_disparity);

// Per-scale disparity range D_max / (b * 2^(s-1)); throws naming the first
// scale where the division is not exact.
std::vector<std::size_t> scale_disparities(std::size_t max_disparity, std::size_t base_factor,
                                           std::size_t scales);

CostVolumePyramid build_pyramid(const FeaturePyramid& left, const FeaturePyramid& right,
                                std::size_t max_disparity);

}  // namespace aastereo
