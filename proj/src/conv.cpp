#include "aastereo/conv.hpp"

#include <algorithm>
#include <cmath>

#include "aastereo/error.hpp"

namespace aastereo {

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, ConvGeometry geometry) {
  if (geometry.stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t padded = in + 2 * geometry.padding;
  if (padded < kernel) {
    throw ShapeError("conv2d: padded extent " + std::to_string(padded) + " smaller than kernel " +
                     std::to_string(kernel));
  }
  return (padded - kernel) / geometry.stride + 1;
}

namespace {

struct ConvDims {
  long cin, h, w, cout, k, oh, ow, stride, pad;
};

ConvDims check_dims(const Tensor& input, const Tensor& weight, ConvGeometry g) {
  require_rank("conv2d input", input, 3);
  require_rank("conv2d weight", weight, 4);
  if (weight.dim(1) != input.dim(0)) {
    throw ShapeError("conv2d: weight " + shape_string(weight.shape()) + " expects " +
                     std::to_string(weight.dim(1)) + " input channels, input is " +
                     shape_string(input.shape()));
  }
  if (weight.dim(2) != weight.dim(3)) {
    throw ShapeError("conv2d: kernel must be square, got " + shape_string(weight.shape()));
  }
  ConvDims d;
  d.cin = static_cast<long>(input.dim(0));
  d.h = static_cast<long>(input.dim(1));
  d.w = static_cast<long>(input.dim(2));
  d.cout = static_cast<long>(weight.dim(0));
  d.k = static_cast<long>(weight.dim(2));
  d.oh = static_cast<long>(conv_output_extent(input.dim(1), weight.dim(2), g));
  d.ow = static_cast<long>(conv_output_extent(input.dim(2), weight.dim(2), g));
  d.stride = static_cast<long>(g.stride);
  d.pad = static_cast<long>(g.padding);
  return d;
}

// Output positions o in [lo, hi) whose input tap o*stride - pad + k lies in [0, extent).
std::pair<long, long> valid_range(long k, long extent, long out_extent, long stride, long pad) {
  long lo = 0;
  if (pad > k) lo = (pad - k + stride - 1) / stride;
  long hi = out_extent;
  const long last = extent - 1 + pad - k;
  if (last < 0) return {0, 0};
  hi = std::min(hi, last / stride + 1);
  return {lo, std::max(lo, hi)};
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor& bias,
                      ConvGeometry geometry) {
  const ConvDims d = check_dims(input, weight, geometry);
  if (bias.shape() != Shape{weight.dim(0)}) {
    throw ShapeError("conv2d: bias " + shape_string(bias.shape()) + " does not match " +
                     std::to_string(weight.dim(0)) + " output channels");
  }
  Tensor out({static_cast<std::size_t>(d.cout), static_cast<std::size_t>(d.oh),
              static_cast<std::size_t>(d.ow)});
  const double* x = input.data().data();
  const double* w = weight.data().data();
  double* y = out.data().data();

  parallel_for(static_cast<std::size_t>(d.cout), [&](std::size_t co_index) {
    const long co = static_cast<long>(co_index);
    double* yc = y + co * d.oh * d.ow;
    std::fill(yc, yc + d.oh * d.ow, bias[co_index]);
    for (long ci = 0; ci < d.cin; ++ci) {
      const double* xc = x + ci * d.h * d.w;
      for (long kh = 0; kh < d.k; ++kh) {
        const auto [oh_lo, oh_hi] = valid_range(kh, d.h, d.oh, d.stride, d.pad);
        for (long kw = 0; kw < d.k; ++kw) {
          const double wv = w[((co * d.cin + ci) * d.k + kh) * d.k + kw];
          if (wv == 0.0) continue;
          const auto [ow_lo, ow_hi] = valid_range(kw, d.w, d.ow, d.stride, d.pad);
          for (long oh = oh_lo; oh < oh_hi; ++oh) {
            const long base = (oh * d.stride - d.pad + kh) * d.w - d.pad + kw;
            double* yr = yc + oh * d.ow;
            if (d.stride == 1) {
              for (long ow = ow_lo; ow < ow_hi; ++ow) yr[ow] += wv * xc[base + ow];
            } else {
              for (long ow = ow_lo; ow < ow_hi; ++ow) yr[ow] += wv * xc[base + ow * d.stride];
            }
          }
        }
      }
    }
  });
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_output,
                            ConvGeometry geometry, bool need_input, bool need_params) {
  const ConvDims d = check_dims(input, weight, geometry);
  if (grad_output.shape() != Shape{static_cast<std::size_t>(d.cout),
                                   static_cast<std::size_t>(d.oh),
                                   static_cast<std::size_t>(d.ow)}) {
    throw ShapeError("conv2d backward: cotangent " + shape_string(grad_output.shape()) +
                     " does not match output extent");
  }
  const double* x = input.data().data();
  const double* w = weight.data().data();
  const double* g = grad_output.data().data();
  Conv2dGrads grads;

  if (need_input) {
    grads.input = Tensor::zeros_like(input);
    double* gx = grads.input.data().data();
    parallel_for(static_cast<std::size_t>(d.cin), [&](std::size_t ci_index) {
      const long ci = static_cast<long>(ci_index);
      double* gxc = gx + ci * d.h * d.w;
      for (long co = 0; co < d.cout; ++co) {
        const double* gc = g + co * d.oh * d.ow;
        for (long kh = 0; kh < d.k; ++kh) {
          const auto [oh_lo, oh_hi] = valid_range(kh, d.h, d.oh, d.stride, d.pad);
          for (long kw = 0; kw < d.k; ++kw) {
            const double wv = w[((co * d.cin + ci) * d.k + kh) * d.k + kw];
            if (wv == 0.0) continue;
            const auto [ow_lo, ow_hi] = valid_range(kw, d.w, d.ow, d.stride, d.pad);
            for (long oh = oh_lo; oh < oh_hi; ++oh) {
              const long base = (oh * d.stride - d.pad + kh) * d.w - d.pad + kw;
              const double* gr = gc + oh * d.ow;
              for (long ow = ow_lo; ow < ow_hi; ++ow) gxc[base + ow * d.stride] += wv * gr[ow];
            }
          }
        }
      }
    });
  }

  if (need_params) {
    grads.weight = Tensor::zeros_like(weight);
    grads.bias = Tensor({weight.dim(0)});
    double* gw = grads.weight.data().data();
    parallel_for(static_cast<std::size_t>(d.cout), [&](std::size_t co_index) {
      const long co = static_cast<long>(co_index);
      const double* gc = g + co * d.oh * d.ow;
      double bias_acc = 0.0;
      for (long i = 0; i < d.oh * d.ow; ++i) bias_acc += gc[i];
      grads.bias[co_index] = bias_acc;
      for (long ci = 0; ci < d.cin; ++ci) {
        const double* xc = x + ci * d.h * d.w;
        for (long kh = 0; kh < d.k; ++kh) {
          const auto [oh_lo, oh_hi] = valid_range(kh, d.h, d.oh, d.stride, d.pad);
          for (long kw = 0; kw < d.k; ++kw) {
            const auto [ow_lo, ow_hi] = valid_range(kw, d.w, d.ow, d.stride, d.pad);
            double acc = 0.0;
            for (long oh = oh_lo; oh < oh_hi; ++oh) {
              const long base = (oh * d.stride - d.pad + kh) * d.w - d.pad + kw;
              const double* gr = gc + oh * d.ow;
              for (long ow = ow_lo; ow < ow_hi; ++ow) acc += gr[ow] * xc[base + ow * d.stride];
            }
            gw[((co * d.cin + ci) * d.k + kh) * d.k + kw] = acc;
          }
        }
      }
    });
  }
  return grads;
}

Var conv2d(Tape& tape, Var input, Var weight, Var bias, ConvGeometry geometry) {
  Tensor out = conv2d_forward(tape.value(input), tape.value(weight), tape.value(bias), geometry);
  return tape.record(
      "conv2d", std::move(out), {input, weight, bias},
      [&tape, input, weight, geometry](const Tensor& g, const std::vector<bool>& needs) {
        Conv2dGrads grads = conv2d_backward(tape.value(input), tape.value(weight), g, geometry,
                                            needs[0], needs[1] || needs[2]);
        return std::vector<Tensor>{std::move(grads.input), std::move(grads.weight),
                                   std::move(grads.bias)};
      });
}

void ConvLayerParams::visit(const std::string& prefix, const ParamVisitor& visitor) {
  visitor(prefix + ".weight", weight);
  visitor(prefix + ".bias", bias);
}

ConvLayerParams make_conv(std::size_t in, std::size_t out, std::size_t kernel,
                          ConvGeometry geometry, std::mt19937_64& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(in * kernel * kernel));
  return ConvLayerParams{random_normal({out, in, kernel, kernel}, stddev, rng), Tensor({out}),
                         geometry};
}

ConvLayerParams make_zero_conv(std::size_t in, std::size_t out, std::size_t kernel,
                               ConvGeometry geometry) {
  return ConvLayerParams{Tensor({out, in, kernel, kernel}), Tensor({out}), geometry};
}

ConvLayerParams make_identity_conv(std::size_t channels) {
  ConvLayerParams layer = make_zero_conv(channels, channels, 1, {});
  for (std::size_t c = 0; c < channels; ++c) layer.weight(c, c, 0, 0) = 1.0;
  return layer;
}

Var apply_conv(ParamBinder& params, const ConvLayerParams& layer, Var input) {
  return conv2d(params.tape(), input, params(layer.weight), params(layer.bias), layer.geometry);
}

Tensor apply_conv(const ConvLayerParams& layer, const Tensor& input) {
  return conv2d_forward(input, layer.weight, layer.bias, layer.geometry);
}

}  // namespace aastereo
