#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <string>

#include "aastereo/autodiff.hpp"
#include "aastereo/parameters.hpp"

namespace aastereo {

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// floor((in + 2*padding - kernel) / stride) + 1; throws ShapeError when the
// padded input is smaller than the kernel.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, ConvGeometry geometry);

// Cross-correlation of a C_in x H x W input with a C_out x C_in x K x K
// weight plus per-output-channel bias. Zero padding.
Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor& bias,
                      ConvGeometry geometry);

struct Conv2dGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_output,
                            ConvGeometry geometry, bool need_input = true,
                            bool need_params = true);

Var conv2d(Tape& tape, Var input, Var weight, Var bias, ConvGeometry geometry);

using ParamVisitor = std::function<void(const std::string& name, Tensor& value)>;

struct ConvLayerParams {
  Tensor weight;  // out x in x K x K
  Tensor bias;    // out
  ConvGeometry geometry;

  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t kernel() const { return weight.dim(2); }

  void visit(const std::string& prefix, const ParamVisitor& visitor);
};

// He-normal weights, zero bias.
ConvLayerParams make_conv(std::size_t in, std::size_t out, std::size_t kernel,
                          ConvGeometry geometry, std::mt19937_64& rng);
ConvLayerParams make_zero_conv(std::size_t in, std::size_t out, std::size_t kernel,
                               ConvGeometry geometry);
// 1x1 convolution with identity weight; requires in == out.
ConvLayerParams make_identity_conv(std::size_t channels);

Var apply_conv(ParamBinder& params, const ConvLayerParams& layer, Var input);
Tensor apply_conv(const ConvLayerParams& layer, const Tensor& input);

}  // namespace aastereo
