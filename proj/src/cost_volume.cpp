#include "aastereo/cost_volume.hpp"

#include "aastereo/error.hpp"

namespace aastereo {

namespace {

void check_features(const Tensor& left, const Tensor& right, std::size_t max_disparity) {
  require_rank("correlate", left, 3);
  require_same_shape("correlate", left, right);
  if (max_disparity == 0) throw ShapeError("correlate: max disparity must be >= 1");
  if (max_disparity > left.dim(2)) {
    throw ShapeError("correlate: max disparity " + std::to_string(max_disparity) +
                     " exceeds feature width " + std::to_string(left.dim(2)));
  }
}

}  // namespace

Tensor correlate_forward(const Tensor& left, const Tensor& right, std::size_t max_disparity) {
  check_features(left, right, max_disparity);
  const std::size_t n = left.dim(0), h = left.dim(1), w = left.dim(2);
  const std::size_t plane = h * w;
  const double inv_n = 1.0 / static_cast<double>(n);
  Tensor out({max_disparity, h, w});
  const double* l = left.data().data();
  const double* r = right.data().data();
  parallel_for(max_disparity, [&](std::size_t d) {
    double* od = out.data().data() + d * plane;
    for (std::size_t c = 0; c < n; ++c) {
      const double* lc = l + c * plane;
      const double* rc = r + c * plane;
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = d; x < w; ++x) od[y * w + x] += lc[y * w + x] * rc[y * w + x - d];
      }
    }
    for (std::size_t i = 0; i < plane; ++i) od[i] *= inv_n;
  });
  return out;
}

CorrelateGrads correlate_backward(const Tensor& left, const Tensor& right,
                                  const Tensor& grad_output) {
  require_rank("correlate backward", grad_output, 3);
  const std::size_t max_disparity = grad_output.dim(0);
  check_features(left, right, max_disparity);
  if (grad_output.dim(1) != left.dim(1) || grad_output.dim(2) != left.dim(2)) {
    throw ShapeError("correlate backward: cotangent " + shape_string(grad_output.shape()) +
                     " does not match features " + shape_string(left.shape()));
  }
  const std::size_t n = left.dim(0), h = left.dim(1), w = left.dim(2);
  const std::size_t plane = h * w;
  const double inv_n = 1.0 / static_cast<double>(n);
  CorrelateGrads grads{Tensor::zeros_like(left), Tensor::zeros_like(right)};
  const double* g = grad_output.data().data();
  parallel_for(n, [&](std::size_t c) {
    const double* lc = left.data().data() + c * plane;
    const double* rc = right.data().data() + c * plane;
    double* glc = grads.left.data().data() + c * plane;
    double* grc = grads.right.data().data() + c * plane;
    for (std::size_t d = 0; d < max_disparity; ++d) {
      const double* gd = g + d * plane;
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = d; x < w; ++x) {
          const double gv = gd[y * w + x] * inv_n;
          glc[y * w + x] += gv * rc[y * w + x - d];
          grc[y * w + x - d] += gv * lc[y * w + x];
        }
      }
    }
  });
  return grads;
}

Var correlate(Tape& tape, Var left, Var right, std::size_t max_disparity) {
  Tensor out = correlate_forward(tape.value(left), tape.value(right), max_disparity);
  return tape.record("correlate", std::move(out), {left, right},
                     [&tape, left, right](const Tensor& g, const std::vector<bool>&) {
                       auto grads = correlate_backward(tape.value(left), tape.value(right), g);
                       return std::vector<Tensor>{std::move(grads.left), std::move(grads.right)};
                     });
}

CostVolume correlate(const FeatureMap& left, const FeatureMap& right, std::size_t max_disparity) {
  return CostVolume{left.scale, correlate_forward(left.values, right.values, max_disparity)};
}

std::vector<std::size_t> scale_disparities(std::size_t max_disparity, std::size_t base_factor,
                                           std::size_t scales) {
  std::vector<std::size_t> out;
  std::size_t factor = base_factor;
  for (std::size_t s = 1; s <= scales; ++s, factor *= 2) {
    if (max_disparity % factor != 0 || max_disparity / factor == 0) {
      throw ShapeError("max disparity " + std::to_string(max_disparity) +
                       " is not a positive multiple of " + std::to_string(factor) +
                       " required by scale " + std::to_string(s));
    }
    out.push_back(max_disparity / factor);
  }
  return out;
}

CostVolumePyramid build_pyramid(const FeaturePyramid& left, const FeaturePyramid& right,
                                std::size_t max_disparity) {
  if (left.levels.size() != right.levels.size() || left.levels.empty()) {
    throw ShapeError("build_pyramid: left/right pyramids have " +
                     std::to_string(left.levels.size()) + " and " +
                     std::to_string(right.levels.size()) + " levels");
  }
  const auto disparities = scale_disparities(max_disparity, left.base_factor, left.levels.size());
  CostVolumePyramid out;
  for (std::size_t s = 0; s < left.levels.size(); ++s) {
    out.push_back(correlate(left.levels[s], right.levels[s], disparities[s]));
  }
  return out;
}

}  // namespace aastereo
