#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "aastereo/config.hpp"
#include "aastereo/cross_scale.hpp"
#include "aastereo/disparity_head.hpp"
#include "aastereo/feature_extractor.hpp"
#include "aastereo/intra_scale.hpp"

namespace aastereo {

struct ModelConfig {
  std::size_t scales = 3;
  std::size_t base_factor = 3;
  std::size_t feature_channels = 16;
  std::size_t max_disparity = 192;
  std::size_t modules = 6;
  std::size_t plain_modules = 3;
  std::size_t isa_kernel = 3;
  std::size_t groups = 2;
  std::size_t dilation = 2;
  std::size_t refine_channels = 16;
  bool refine = true;
  double leaky_slope = 0.1;
  std::uint64_t seed = 1;

  // Throws ConfigError on inconsistent values (including disparity ranges
  // that do not split evenly across scales and groups).
  void validate() const;
  std::vector<std::size_t> scale_disparities() const;
  // Nominal pixel factor between scale s (1-based) and the input image.
  std::size_t scale_factor(std::size_t s) const { return base_factor << (s - 1); }
  SamplingGrid grid() const { return SamplingGrid{isa_kernel, dilation, groups}; }

  // Keys live in the [model] section.
  void write(IniDocument& doc) const;
  static ModelConfig read(const IniDocument& doc);
  static const std::vector<std::string>& keys();
};

// x + conv2(leaky(conv1(x))) over disparity-as-channels; conv2 starts at
// zero so the stage is the identity at initialization.
struct PlainStageParams {
  ConvLayerParams conv1;
  ConvLayerParams conv2;

  void visit(const std::string& prefix, const ParamVisitor& visitor);
};

struct IntraStageParams {
  bool adaptive = false;
  PlainStageParams plain;
  IsaBlockParams isa;

  void visit(const std::string& prefix, const ParamVisitor& visitor);
};

// S intra-scale stages followed by one cross-scale stage.
struct AaModuleParams {
  std::vector<IntraStageParams> stages;
  CsaParams csa;

  void visit(const std::string& prefix, const ParamVisitor& visitor);
};

// Residual refinement of the upsampled scale-1 disparity, guided by the
// left image: three 3x3 convs over [disparity, image]; the last starts at
// zero.
struct RefineParams {
  ConvLayerParams conv1;
  ConvLayerParams conv2;
  ConvLayerParams conv3;

  void visit(const std::string& prefix, const ParamVisitor& visitor);
};

struct Model {
  ModelConfig config;
  FeatureExtractorParams features;
  std::vector<AaModuleParams> modules;
  RefineParams refinement;

  // Every parameter tensor in a fixed order with a stable dotted name.
  void visit(const ParamVisitor& visitor);
  std::size_t parameter_count();
};

Model make_model(const ModelConfig& config);

// Rejects image sizes the model cannot process, reporting the smallest
// padded size that would work.
void check_input_size(const ModelConfig& config, std::size_t height, std::size_t width);

// H x W x C image in [0, 1] to the normalized 3 x H x W network input.
// Single-channel images are replicated to three channels.
Tensor prepare_image(const Tensor& image);

// h x w disparity to H x W, with values multiplied by `factor` to stay in
// full-resolution pixels.
Var upsample_disparity(Tape& tape, Var disparity, std::size_t height, std::size_t width,
                       double factor);

// upsample(d) * b + residual(conv([upsample(d) * b, image])). `low_res` is
// h x w with h = ceil(H / b); `image` is the normalized C x H x W input.
Var refine(ParamBinder& params, const RefineParams& layer, Var low_res, Var image,
           std::size_t base_factor, double leaky_slope = 0.1);

struct ForwardResult {
  // Full-resolution predictions, finest first: the refined map (when
  // refinement is on) followed by every scale's upsampled regression. In
  // inference mode only the final map is produced.
  std::vector<Var> predictions;
  Var final;
  // Aggregated cost volumes after the last module, finest first.
  std::vector<Var> volumes;
};

// `left`/`right` are prepared 3 x H x W images.
ForwardResult forward(ParamBinder& params, const Model& model, Var left, Var right, bool training);

// Full-resolution disparity for an H x W x C stereo pair in [0, 1].
Tensor predict(const Model& model, const Tensor& left, const Tensor& right);

}  // namespace aastereo
