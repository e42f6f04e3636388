#pragma once

#include <array>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "aastereo/conv.hpp"

namespace aastereo {

inline constexpr std::array<double, 3> kImageNetMean{0.485, 0.456, 0.406};
inline constexpr std::array<double, 3> kImageNetStd{0.229, 0.224, 0.225};

// One level of a feature pyramid; values are channels x height x width.
struct FeatureMap {
  std::size_t scale = 1;
  Tensor values;

  std::size_t channels() const { return values.dim(0); }
  std::size_t height() const { return values.dim(1); }
  std::size_t width() const { return values.dim(2); }
};

struct FeaturePyramid {
  std::size_t base_factor = 1;
  std::vector<FeatureMap> levels;  // levels[0] is scale 1, the finest
};

// Shared convolutional stack: one stride-b layer, one stride-1 layer (scale
// 1), then one stride-2 layer per further scale, each followed by a leaky
// ReLU.
struct FeatureExtractorParams {
  std::size_t base_factor = 3;
  std::size_t scales = 3;
  double leaky_slope = 0.1;
  std::vector<ConvLayerParams> layers;

  void visit(const std::string& prefix, const ParamVisitor& visitor);
};

FeatureExtractorParams make_feature_extractor(std::size_t image_channels,
                                              std::size_t feature_channels,
                                              std::size_t base_factor, std::size_t scales,
                                              std::mt19937_64& rng);

// (x - mean[c]) / std[c] on a C x H x W image.
Tensor normalize_image(const Tensor& image, std::span<const double> mean,
                       std::span<const double> stddev);

// ceil(extent / base) then repeated ceil-halving; entry s-1 is scale s.
std::vector<std::size_t> pyramid_extents(std::size_t extent, std::size_t base_factor,
                                         std::size_t scales);

// `image` is C x H x W. Returns one Var per scale, finest first. Rejects
// images smaller than the total downsampling factor b * 2^(S-1).
std::vector<Var> extract_pyramid(ParamBinder& params, const FeatureExtractorParams& extractor,
                                 Var image);
FeaturePyramid extract_pyramid(const FeatureExtractorParams& extractor, const Tensor& image);

}  // namespace aastereo
