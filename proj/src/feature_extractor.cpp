#include "aastereo/feature_extractor.hpp"

#include "aastereo/error.hpp"
#include "aastereo/ops.hpp"

namespace aastereo {

void FeatureExtractorParams::visit(const std::string& prefix, const ParamVisitor& visitor) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].visit(prefix + ".conv" + std::to_string(i), visitor);
  }
}

FeatureExtractorParams make_feature_extractor(std::size_t image_channels,
                                              std::size_t feature_channels,
                                              std::size_t base_factor, std::size_t scales,
                                              std::mt19937_64& rng) {
  if (base_factor == 0 || scales == 0) {
    throw std::invalid_argument("feature extractor needs base factor >= 1 and scales >= 1");
  }
  FeatureExtractorParams p;
  p.base_factor = base_factor;
  p.scales = scales;
  // Kernel 2*floor(b/2)+1 with padding floor(b/2) and stride b yields ceil(H/b).
  const std::size_t pad = base_factor / 2;
  p.layers.push_back(
      make_conv(image_channels, feature_channels, 2 * pad + 1, {base_factor, pad}, rng));
  p.layers.push_back(make_conv(feature_channels, feature_channels, 3, {1, 1}, rng));
  for (std::size_t s = 1; s < scales; ++s) {
    p.layers.push_back(make_conv(feature_channels, feature_channels, 3, {2, 1}, rng));
  }
  return p;
}

Tensor normalize_image(const Tensor& image, std::span<const double> mean,
                       std::span<const double> stddev) {
  require_rank("normalize_image", image, 3);
  const std::size_t channels = image.dim(0);
  if (mean.size() != channels || stddev.size() != channels) {
    throw ShapeError("normalize_image: need " + std::to_string(channels) +
                     " per-channel statistics");
  }
  for (double s : stddev) {
    if (!(s > 0.0)) throw std::invalid_argument("normalize_image: std must be positive");
  }
  Tensor out(image.shape());
  const std::size_t plane = image.dim(1) * image.dim(2);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      out[c * plane + i] = (image[c * plane + i] - mean[c]) / stddev[c];
    }
  }
  return out;
}

std::vector<std::size_t> pyramid_extents(std::size_t extent, std::size_t base_factor,
                                         std::size_t scales) {
  std::vector<std::size_t> out;
  std::size_t e = (extent + base_factor - 1) / base_factor;
  for (std::size_t s = 0; s < scales; ++s) {
    out.push_back(e);
    e = (e + 1) / 2;
  }
  return out;
}

std::vector<Var> extract_pyramid(ParamBinder& params, const FeatureExtractorParams& extractor,
                                 Var image) {
  Tape& tape = params.tape();
  const Tensor& img = tape.value(image);
  require_rank("extract_pyramid", img, 3);
  const std::size_t total = extractor.base_factor << (extractor.scales - 1);
  if (img.dim(1) < total || img.dim(2) < total) {
    throw ShapeError("extract_pyramid: image " + shape_string(img.shape()) +
                     " smaller than total downsampling factor " + std::to_string(total));
  }
  if (extractor.layers.size() != extractor.scales + 1) {
    throw ShapeError("extract_pyramid: expected " + std::to_string(extractor.scales + 1) +
                     " layers, have " + std::to_string(extractor.layers.size()));
  }

  std::vector<Var> levels;
  Var x = ops::leaky_relu(tape, apply_conv(params, extractor.layers[0], image),
                          extractor.leaky_slope);
  x = ops::leaky_relu(tape, apply_conv(params, extractor.layers[1], x), extractor.leaky_slope);
  levels.push_back(x);
  for (std::size_t s = 1; s < extractor.scales; ++s) {
    x = ops::leaky_relu(tape, apply_conv(params, extractor.layers[s + 1], x),
                        extractor.leaky_slope);
    levels.push_back(x);
  }

  const auto heights = pyramid_extents(img.dim(1), extractor.base_factor, extractor.scales);
  const auto widths = pyramid_extents(img.dim(2), extractor.base_factor, extractor.scales);
  for (std::size_t s = 0; s < levels.size(); ++s) {
    const Tensor& v = tape.value(levels[s]);
    if (v.dim(1) != heights[s] || v.dim(2) != widths[s]) {
      throw std::logic_error("extract_pyramid: scale " + std::to_string(s + 1) + " has shape " +
                             shape_string(v.shape()));
    }
  }
  return levels;
}

FeaturePyramid extract_pyramid(const FeatureExtractorParams& extractor, const Tensor& image) {
  Tape tape;
  ParamBinder params(tape, false);
  auto levels = extract_pyramid(params, extractor, tape.constant(image));
  FeaturePyramid pyramid;
  pyramid.base_factor = extractor.base_factor;
  for (std::size_t s = 0; s < levels.size(); ++s) {
    pyramid.levels.push_back(FeatureMap{s + 1, tape.value(levels[s])});
  }
  return pyramid;
}

}  // namespace aastereo
