#include "aastereo/intra_scale.hpp"

#include <cmath>

#include "aastereo/error.hpp"
#include "aastereo/ops.hpp"

namespace aastereo {

// ---------------------------------------------------------------------------
// Window aggregation

Tensor WindowAggregationParams::weights() const {
  if (kernel % 2 == 0) throw std::invalid_argument("window_aggregate: kernel must be odd");
  if (weighting == WindowWeighting::kGaussian && !(sigma > 0.0)) {
    throw std::invalid_argument("window_aggregate: gaussian sigma must be positive");
  }
  const long half = static_cast<long>(kernel / 2);
  Tensor w({kernel, kernel});
  double total = 0.0;
  for (long i = -half; i <= half; ++i) {
    for (long j = -half; j <= half; ++j) {
      double v = 1.0;
      if (weighting == WindowWeighting::kGaussian) {
        const double dy = static_cast<double>(i * static_cast<long>(dilation));
        const double dx = static_cast<double>(j * static_cast<long>(dilation));
        v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
      }
      w(i + half, j + half) = v;
      total += v;
    }
  }
  w *= 1.0 / total;
  return w;
}

Tensor window_aggregate(const Tensor& volume, const WindowAggregationParams& params) {
  require_rank("window_aggregate", volume, 3);
  const Tensor weights = params.weights();
  const long depth = static_cast<long>(volume.dim(0));
  const long h = static_cast<long>(volume.dim(1));
  const long w = static_cast<long>(volume.dim(2));
  const long k = static_cast<long>(params.kernel);
  const long half = k / 2;
  const long r = static_cast<long>(params.dilation);
  Tensor out(volume.shape());
  for (long d = 0; d < depth; ++d) {
    const double* src = volume.data().data() + d * h * w;
    double* dst = out.data().data() + d * h * w;
    for (long y = 0; y < h; ++y) {
      for (long x = 0; x < w; ++x) {
        double acc = 0.0;
        double norm = 0.0;
        for (long i = 0; i < k; ++i) {
          const long qy = y + r * (i - half);
          if (qy < 0 || qy >= h) continue;
          for (long j = 0; j < k; ++j) {
            const long qx = x + r * (j - half);
            if (qx < 0 || qx >= w) continue;
            const double wq = weights[static_cast<std::size_t>(i * k + j)];
            acc += wq * src[qy * w + qx];
            norm += wq;
          }
        }
        dst[y * w + x] = params.border == BorderMode::kRenormalize ? acc / norm : acc;
      }
    }
  }
  return out;
}

CostVolume window_aggregate(const CostVolume& volume, const WindowAggregationParams& params) {
  return CostVolume{volume.scale, window_aggregate(volume.values, params)};
}

// ---------------------------------------------------------------------------
// Bilinear sampling

BilinearStencil::BilinearStencil(double y, double x) {
  const double fy = std::floor(y);
  const double fx = std::floor(x);
  y0 = static_cast<long>(fy);
  x0 = static_cast<long>(fx);
  ly = y - fy;
  lx = x - fx;
}

namespace {

inline double at(const double* slice, long height, long width, long y, long x) {
  return (y >= 0 && y < height && x >= 0 && x < width) ? slice[y * width + x] : 0.0;
}

}  // namespace

double BilinearStencil::value(const double* slice, long height, long width) const {
  const double hy = 1.0 - ly, hx = 1.0 - lx;
  return hy * hx * at(slice, height, width, y0, x0) +
         hy * lx * at(slice, height, width, y0, x0 + 1) +
         ly * hx * at(slice, height, width, y0 + 1, x0) +
         ly * lx * at(slice, height, width, y0 + 1, x0 + 1);
}

std::pair<double, double> BilinearStencil::gradient(const double* slice, long height,
                                                    long width) const {
  const double v00 = at(slice, height, width, y0, x0);
  const double v01 = at(slice, height, width, y0, x0 + 1);
  const double v10 = at(slice, height, width, y0 + 1, x0);
  const double v11 = at(slice, height, width, y0 + 1, x0 + 1);
  const double hy = 1.0 - ly, hx = 1.0 - lx;
  return {hx * (v10 - v00) + lx * (v11 - v01), hy * (v01 - v00) + ly * (v11 - v10)};
}

void BilinearStencil::scatter(double* grad_slice, long height, long width, double coef) const {
  const double hy = 1.0 - ly, hx = 1.0 - lx;
  auto add = [&](long y, long x, double v) {
    if (y >= 0 && y < height && x >= 0 && x < width) grad_slice[y * width + x] += v;
  };
  add(y0, x0, coef * hy * hx);
  add(y0, x0 + 1, coef * hy * lx);
  add(y0 + 1, x0, coef * ly * hx);
  add(y0 + 1, x0 + 1, coef * ly * lx);
}

double bilinear_sample(const Tensor& slice, double y, double x) {
  require_rank("bilinear_sample", slice, 2);
  return BilinearStencil(y, x).value(slice.data().data(), static_cast<long>(slice.dim(0)),
                                     static_cast<long>(slice.dim(1)));
}

Var bilinear_sample(Tape& tape, Var slice, Var point) {
  const Tensor& pt = tape.value(point);
  if (pt.shape() != Shape{2}) {
    throw ShapeError("bilinear_sample: point must have shape [2], got " + shape_string(pt.shape()));
  }
  const double value = bilinear_sample(tape.value(slice), pt[0], pt[1]);
  return tape.record(
      "bilinear_sample", Tensor::scalar(value), {slice, point},
      [&tape, slice, point](const Tensor& g, const std::vector<bool>& needs) {
        const Tensor& s = tape.value(slice);
        const Tensor& pt = tape.value(point);
        const long h = static_cast<long>(s.dim(0)), w = static_cast<long>(s.dim(1));
        const BilinearStencil st(pt[0], pt[1]);
        std::vector<Tensor> grads(2);
        if (needs[0]) {
          grads[0] = Tensor::zeros_like(s);
          st.scatter(grads[0].data().data(), h, w, g.item());
        }
        if (needs[1]) {
          const auto [gy, gx] = st.gradient(s.data().data(), h, w);
          grads[1] = Tensor({2}, {g.item() * gy, g.item() * gx});
        }
        return grads;
      });
}

// ---------------------------------------------------------------------------
// Adaptive aggregation

namespace {

struct DeformDims {
  long depth, h, w, k, half, dilation, groups, per_group, points;
};

DeformDims check_deform(const Tensor& volume, const Tensor& offsets, const Tensor& modulation,
                        const Tensor& base_weights, const SamplingGrid& grid) {
  require_rank("adaptive_aggregate volume", volume, 3);
  if (grid.kernel % 2 == 0 || grid.kernel == 0) {
    throw std::invalid_argument("adaptive_aggregate: grid extent K must be odd");
  }
  if (grid.groups == 0 || volume.dim(0) % grid.groups != 0) {
    throw ShapeError("adaptive_aggregate: " + std::to_string(grid.groups) +
                     " groups do not evenly divide " + std::to_string(volume.dim(0)) +
                     " disparities");
  }
  const std::size_t points = grid.points();
  const Shape off_shape{2 * points * grid.groups, volume.dim(1), volume.dim(2)};
  const Shape mod_shape{points * grid.groups, volume.dim(1), volume.dim(2)};
  if (offsets.shape() != off_shape) {
    throw ShapeError("adaptive_aggregate: offset field " + shape_string(offsets.shape()) +
                     ", expected " + shape_string(off_shape));
  }
  if (modulation.shape() != mod_shape) {
    throw ShapeError("adaptive_aggregate: modulation field " + shape_string(modulation.shape()) +
                     ", expected " + shape_string(mod_shape));
  }
  if (base_weights.shape() != Shape{points}) {
    throw ShapeError("adaptive_aggregate: base weights " + shape_string(base_weights.shape()) +
                     ", expected [" + std::to_string(points) + "]");
  }
  DeformDims d;
  d.depth = static_cast<long>(volume.dim(0));
  d.h = static_cast<long>(volume.dim(1));
  d.w = static_cast<long>(volume.dim(2));
  d.k = static_cast<long>(grid.kernel);
  d.half = d.k / 2;
  d.dilation = static_cast<long>(grid.dilation);
  d.groups = static_cast<long>(grid.groups);
  d.per_group = d.depth / d.groups;
  d.points = static_cast<long>(points);
  return d;
}

// Sampling location of point k for group g at pixel (y, x).
inline BilinearStencil locate(const DeformDims& d, const double* offsets, long g, long k, long y,
                              long x) {
  const long plane = d.h * d.w;
  const long ch = (g * d.points + k) * 2;
  const double dy = offsets[ch * plane + y * d.w + x];
  const double dx = offsets[(ch + 1) * plane + y * d.w + x];
  const long i = k / d.k, j = k % d.k;
  return BilinearStencil(static_cast<double>(y + d.dilation * (i - d.half)) + dy,
                         static_cast<double>(x + d.dilation * (j - d.half)) + dx);
}

}  // namespace

Tensor deform_aggregate_forward(const Tensor& volume, const Tensor& offsets,
                                const Tensor& modulation, const Tensor& base_weights,
                                const SamplingGrid& grid) {
  const DeformDims d = check_deform(volume, offsets, modulation, base_weights, grid);
  const long plane = d.h * d.w;
  Tensor out(volume.shape());
  const double* vol = volume.data().data();
  const double* off = offsets.data().data();
  const double* mod = modulation.data().data();
  double* dst = out.data().data();

  parallel_for(static_cast<std::size_t>(d.h), [&](std::size_t row) {
    const long y = static_cast<long>(row);
    for (long g = 0; g < d.groups; ++g) {
      for (long k = 0; k < d.points; ++k) {
        const double wk = base_weights[static_cast<std::size_t>(k)];
        for (long x = 0; x < d.w; ++x) {
          const double coef = wk * mod[(g * d.points + k) * plane + y * d.w + x];
          if (coef == 0.0) continue;
          const BilinearStencil st = locate(d, off, g, k, y, x);
          for (long c = g * d.per_group; c < (g + 1) * d.per_group; ++c) {
            dst[c * plane + y * d.w + x] += coef * st.value(vol + c * plane, d.h, d.w);
          }
        }
      }
    }
  });
  return out;
}

DeformAggregateGrads deform_aggregate_backward(const Tensor& volume, const Tensor& offsets,
                                               const Tensor& modulation,
                                               const Tensor& base_weights,
                                               const Tensor& grad_output,
                                               const SamplingGrid& grid) {
  const DeformDims d = check_deform(volume, offsets, modulation, base_weights, grid);
  require_same_shape("adaptive_aggregate backward", volume, grad_output);
  const long plane = d.h * d.w;
  const double* vol = volume.data().data();
  const double* off = offsets.data().data();
  const double* mod = modulation.data().data();
  const double* gout = grad_output.data().data();

  DeformAggregateGrads grads{Tensor::zeros_like(volume), Tensor::zeros_like(offsets),
                             Tensor::zeros_like(modulation), Tensor::zeros_like(base_weights)};
  double* g_off = grads.offsets.data().data();
  double* g_mod = grads.modulation.data().data();

  // Field and weight gradients: each row writes only its own pixels; the
  // base-weight sums are kept per row and reduced in row order afterwards.
  Tensor row_weight_grads({static_cast<std::size_t>(d.h), static_cast<std::size_t>(d.points)});
  parallel_for(static_cast<std::size_t>(d.h), [&](std::size_t row) {
    const long y = static_cast<long>(row);
    double* row_wg = row_weight_grads.data().data() + y * d.points;
    for (long g = 0; g < d.groups; ++g) {
      for (long k = 0; k < d.points; ++k) {
        const double wk = base_weights[static_cast<std::size_t>(k)];
        for (long x = 0; x < d.w; ++x) {
          const long pix = y * d.w + x;
          const double m = mod[(g * d.points + k) * plane + pix];
          const BilinearStencil st = locate(d, off, g, k, y, x);
          double s_val = 0.0, s_dy = 0.0, s_dx = 0.0;
          for (long c = g * d.per_group; c < (g + 1) * d.per_group; ++c) {
            const double go = gout[c * plane + pix];
            if (go == 0.0) continue;
            s_val += go * st.value(vol + c * plane, d.h, d.w);
            const auto [gy, gx] = st.gradient(vol + c * plane, d.h, d.w);
            s_dy += go * gy;
            s_dx += go * gx;
          }
          g_mod[(g * d.points + k) * plane + pix] = wk * s_val;
          const long ch = (g * d.points + k) * 2;
          g_off[ch * plane + pix] = wk * m * s_dy;
          g_off[(ch + 1) * plane + pix] = wk * m * s_dx;
          row_wg[k] += m * s_val;
        }
      }
    }
  });
  for (long y = 0; y < d.h; ++y) {
    for (long k = 0; k < d.points; ++k) {
      grads.base_weights[static_cast<std::size_t>(k)] += row_weight_grads(y, k);
    }
  }

  // Volume gradient: scatter, one disparity slice per task.
  double* g_vol = grads.volume.data().data();
  parallel_for(static_cast<std::size_t>(d.depth), [&](std::size_t slice) {
    const long c = static_cast<long>(slice);
    const long g = c / d.per_group;
    double* g_slice = g_vol + c * plane;
    for (long y = 0; y < d.h; ++y) {
      for (long x = 0; x < d.w; ++x) {
        const double go = gout[c * plane + y * d.w + x];
        if (go == 0.0) continue;
        for (long k = 0; k < d.points; ++k) {
          const double coef = base_weights[static_cast<std::size_t>(k)] *
                              mod[(g * d.points + k) * plane + y * d.w + x];
          if (coef == 0.0) continue;
          locate(d, off, g, k, y, x).scatter(g_slice, d.h, d.w, coef * go);
        }
      }
    }
  });
  return grads;
}

Var deform_aggregate(Tape& tape, Var volume, Var offsets, Var modulation, Var base_weights,
                     const SamplingGrid& grid) {
  Tensor out = deform_aggregate_forward(tape.value(volume), tape.value(offsets),
                                        tape.value(modulation), tape.value(base_weights), grid);
  return tape.record(
      "deform_aggregate", std::move(out), {volume, offsets, modulation, base_weights},
      [&tape, volume, offsets, modulation, base_weights, grid](const Tensor& g,
                                                               const std::vector<bool>&) {
        auto grads = deform_aggregate_backward(tape.value(volume), tape.value(offsets),
                                               tape.value(modulation), tape.value(base_weights),
                                               g, grid);
        return std::vector<Tensor>{std::move(grads.volume), std::move(grads.offsets),
                                   std::move(grads.modulation), std::move(grads.base_weights)};
      });
}

void AdaptiveAggregationParams::visit(const std::string& prefix, const ParamVisitor& visitor) {
  visitor(prefix + ".base_weights", base_weights);
  offset_generator.visit(prefix + ".offset", visitor);
  modulation_generator.visit(prefix + ".modulation", visitor);
}

AdaptiveAggregationParams make_adaptive_aggregation(std::size_t disparities,
                                                    const SamplingGrid& grid) {
  if (grid.kernel % 2 == 0) throw std::invalid_argument("adaptive aggregation: K must be odd");
  if (grid.groups == 0 || disparities % grid.groups != 0) {
    throw ShapeError("adaptive aggregation: " + std::to_string(grid.groups) +
                     " groups do not evenly divide " + std::to_string(disparities) +
                     " disparities");
  }
  const std::size_t points = grid.points();
  const ConvGeometry same{1, grid.kernel / 2};
  AdaptiveAggregationParams p;
  p.grid = grid;
  p.base_weights = Tensor({points}, 2.0 / static_cast<double>(points));
  p.offset_generator = make_zero_conv(disparities, 2 * points * grid.groups, grid.kernel, same);
  p.modulation_generator = make_zero_conv(disparities, points * grid.groups, grid.kernel, same);
  return p;
}

AdaptiveFields adaptive_fields(const AdaptiveAggregationParams& params, const Tensor& volume) {
  AdaptiveFields f;
  f.offsets = apply_conv(params.offset_generator, volume);
  f.modulation = apply_conv(params.modulation_generator, volume);
  for (auto& v : f.modulation.data()) v = 1.0 / (1.0 + std::exp(-v));
  return f;
}

Var adaptive_aggregate(ParamBinder& params, const AdaptiveAggregationParams& layer, Var volume) {
  Tape& tape = params.tape();
  Var offsets = apply_conv(params, layer.offset_generator, volume);
  Var modulation = ops::sigmoid(tape, apply_conv(params, layer.modulation_generator, volume));
  return deform_aggregate(tape, volume, offsets, modulation, params(layer.base_weights),
                          layer.grid);
}

CostVolume adaptive_aggregate(const AdaptiveAggregationParams& layer, const CostVolume& volume) {
  Tape tape;
  ParamBinder params(tape, false);
  Var out = adaptive_aggregate(params, layer, tape.constant(volume.values));
  return CostVolume{volume.scale, tape.value(out)};
}

void IsaBlockParams::visit(const std::string& prefix, const ParamVisitor& visitor) {
  reduce.visit(prefix + ".reduce", visitor);
  adaptive.visit(prefix + ".adaptive", visitor);
  expand.visit(prefix + ".expand", visitor);
}

IsaBlockParams make_isa_block(std::size_t disparities, const SamplingGrid& grid) {
  return IsaBlockParams{make_identity_conv(disparities),
                        make_adaptive_aggregation(disparities, grid),
                        make_zero_conv(disparities, disparities, 1, {})};
}

Var isa_block(ParamBinder& params, const IsaBlockParams& block, Var volume) {
  Var x = apply_conv(params, block.reduce, volume);
  x = adaptive_aggregate(params, block.adaptive, x);
  x = apply_conv(params, block.expand, x);
  return ops::add(params.tape(), x, volume);
}

}  // namespace aastereo
