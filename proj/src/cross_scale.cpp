#include "aastereo/cross_scale.hpp"

#include <algorithm>
#include <cmath>

#include "aastereo/error.hpp"
#include "aastereo/ops.hpp"

namespace aastereo {

namespace {

struct Taps {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};

Taps upsample_taps(std::size_t in, std::size_t out) {
  Taps t;
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    t.lo.push_back(lo);
    t.hi.push_back(std::min(lo + 1, in - 1));
    t.frac.push_back(src - static_cast<double>(lo));
  }
  return t;
}

void check_upsample(const Shape& source, std::size_t target_h, std::size_t target_w) {
  if (source.size() != 3) throw ShapeError("bilinear_upsample: expected rank 3, got " + shape_string(source));
  if (target_h < source[1] || target_w < source[2]) {
    throw ShapeError("bilinear_upsample: target " + std::to_string(target_h) + "x" +
                     std::to_string(target_w) + " is smaller than source " + shape_string(source));
  }
}

}  // namespace

Tensor bilinear_upsample_forward(const Tensor& volume, std::size_t target_h,
                                 std::size_t target_w) {
  check_upsample(volume.shape(), target_h, target_w);
  const std::size_t channels = volume.dim(0), h = volume.dim(1), w = volume.dim(2);
  const Taps ty = upsample_taps(h, target_h);
  const Taps tx = upsample_taps(w, target_w);
  Tensor out({channels, target_h, target_w});
  for (std::size_t c = 0; c < channels; ++c) {
    const double* src = volume.data().data() + c * h * w;
    double* dst = out.data().data() + c * target_h * target_w;
    for (std::size_t i = 0; i < target_h; ++i) {
      const double* r0 = src + ty.lo[i] * w;
      const double* r1 = src + ty.hi[i] * w;
      const double fy = ty.frac[i];
      for (std::size_t j = 0; j < target_w; ++j) {
        const double fx = tx.frac[j];
        const double top = (1.0 - fx) * r0[tx.lo[j]] + fx * r0[tx.hi[j]];
        const double bottom = (1.0 - fx) * r1[tx.lo[j]] + fx * r1[tx.hi[j]];
        dst[i * target_w + j] = (1.0 - fy) * top + fy * bottom;
      }
    }
  }
  return out;
}

Tensor bilinear_upsample_backward(const Tensor& grad_output, std::size_t source_h,
                                  std::size_t source_w) {
  require_rank("bilinear_upsample backward", grad_output, 3);
  const std::size_t channels = grad_output.dim(0);
  const std::size_t th = grad_output.dim(1), tw = grad_output.dim(2);
  check_upsample({channels, source_h, source_w}, th, tw);
  const Taps ty = upsample_taps(source_h, th);
  const Taps tx = upsample_taps(source_w, tw);
  Tensor grad({channels, source_h, source_w});
  for (std::size_t c = 0; c < channels; ++c) {
    const double* g = grad_output.data().data() + c * th * tw;
    double* dst = grad.data().data() + c * source_h * source_w;
    for (std::size_t i = 0; i < th; ++i) {
      double* r0 = dst + ty.lo[i] * source_w;
      double* r1 = dst + ty.hi[i] * source_w;
      const double fy = ty.frac[i];
      for (std::size_t j = 0; j < tw; ++j) {
        const double fx = tx.frac[j];
        const double gv = g[i * tw + j];
        r0[tx.lo[j]] += (1.0 - fy) * (1.0 - fx) * gv;
        r0[tx.hi[j]] += (1.0 - fy) * fx * gv;
        r1[tx.lo[j]] += fy * (1.0 - fx) * gv;
        r1[tx.hi[j]] += fy * fx * gv;
      }
    }
  }
  return grad;
}

Var bilinear_upsample(Tape& tape, Var volume, std::size_t target_h, std::size_t target_w) {
  const Tensor& v = tape.value(volume);
  const std::size_t h = v.dim(1), w = v.dim(2);
  Tensor out = bilinear_upsample_forward(v, target_h, target_w);
  return tape.record("bilinear_upsample", std::move(out), {volume},
                     [h, w](const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{bilinear_upsample_backward(g, h, w)};
                     });
}

// ---------------------------------------------------------------------------

void CsaParams::visit(const std::string& prefix, const ParamVisitor& visitor) {
  for (std::size_t s = 0; s < branches.size(); ++s) {
    for (std::size_t k = 0; k < branches[s].size(); ++k) {
      auto& convs = branches[s][k].convs;
      for (std::size_t j = 0; j < convs.size(); ++j) {
        convs[j].visit(prefix + ".s" + std::to_string(s + 1) + ".k" + std::to_string(k + 1) +
                           ".conv" + std::to_string(j),
                       visitor);
      }
    }
  }
}

namespace {

template <typename MakeConv>
CsaParams build_csa(std::span<const std::size_t> disparities, MakeConv&& make) {
  const std::size_t scales = disparities.size();
  for (std::size_t s = 1; s < scales; ++s) {
    if (disparities[s] * 2 != disparities[s - 1]) {
      throw ShapeError("csa: disparity range of scale " + std::to_string(s + 1) +
                       " must be half of scale " + std::to_string(s));
    }
  }
  CsaParams p;
  p.branches.resize(scales, std::vector<CsaBranch>(scales));
  for (std::size_t s = 0; s < scales; ++s) {
    for (std::size_t k = 0; k < scales; ++k) {
      auto& convs = p.branches[s][k].convs;
      if (k < s) {
        std::size_t channels = disparities[k];
        for (std::size_t step = k; step < s; ++step) {
          convs.push_back(make(channels, channels / 2, 3, ConvGeometry{2, 1}));
          channels /= 2;
        }
      } else if (k > s) {
        convs.push_back(make(disparities[k], disparities[s], 1, ConvGeometry{1, 0}));
      }
    }
  }
  return p;
}

}  // namespace

CsaParams make_csa(std::span<const std::size_t> disparities) {
  return build_csa(disparities, [](std::size_t in, std::size_t out, std::size_t kernel,
                                   ConvGeometry g) { return make_zero_conv(in, out, kernel, g); });
}

CsaParams make_random_csa(std::span<const std::size_t> disparities, std::mt19937_64& rng) {
  return build_csa(disparities,
                   [&rng](std::size_t in, std::size_t out, std::size_t kernel, ConvGeometry g) {
                     return make_conv(in, out, kernel, g, rng);
                   });
}

std::vector<Var> csa(ParamBinder& params, const CsaParams& layer, std::span<const Var> volumes) {
  Tape& tape = params.tape();
  const std::size_t scales = layer.scales();
  if (volumes.size() != scales) {
    throw ShapeError("csa: expected " + std::to_string(scales) + " volumes, got " +
                     std::to_string(volumes.size()));
  }
  for (std::size_t s = 1; s < scales; ++s) {
    const Shape& fine = tape.value(volumes[s - 1]).shape();
    const Shape& coarse = tape.value(volumes[s]).shape();
    const Shape expected{fine[0] / 2, (fine[1] + 1) / 2, (fine[2] + 1) / 2};
    if (coarse != expected || fine[0] % 2 != 0) {
      throw ShapeError("csa: scale " + std::to_string(s + 1) + " volume " + shape_string(coarse) +
                       " is inconsistent with scale " + std::to_string(s) + " volume " +
                       shape_string(fine));
    }
  }

  std::vector<Var> out;
  for (std::size_t s = 0; s < scales; ++s) {
    const Shape& target = tape.value(volumes[s]).shape();
    Var acc = volumes[s];
    for (std::size_t k = 0; k < scales; ++k) {
      if (k == s) continue;
      const auto& convs = layer.branches.at(s).at(k).convs;
      Var branch = volumes[k];
      if (k > s) branch = bilinear_upsample(tape, branch, target[1], target[2]);
      for (const auto& conv : convs) branch = apply_conv(params, conv, branch);
      if (tape.value(branch).shape() != target) {
        throw ShapeError("csa: branch (s=" + std::to_string(s + 1) + ", k=" + std::to_string(k + 1) +
                         ") produced " + shape_string(tape.value(branch).shape()) + ", expected " +
                         shape_string(target));
      }
      acc = ops::add(tape, acc, branch);
    }
    out.push_back(acc);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Thomas algorithm for the symmetric tridiagonal system with diagonal
// `diag` and constant off-diagonal `off`.
std::vector<double> solve_tridiagonal(const std::vector<double>& diag, double off,
                                      std::vector<double> rhs) {
  const std::size_t n = diag.size();
  std::vector<double> c(n, 0.0);
  double denom = diag[0];
  if (n > 1) c[0] = off / denom;
  rhs[0] /= denom;
  for (std::size_t i = 1; i < n; ++i) {
    denom = diag[i] - off * c[i - 1];
    if (i + 1 < n) c[i] = off / denom;
    rhs[i] = (rhs[i] - off * rhs[i - 1]) / denom;
  }
  for (std::size_t i = n - 1; i-- > 0;) rhs[i] -= c[i] * rhs[i + 1];
  return rhs;
}

}  // namespace

CrossScaleSolution solve_cross_scale(const CrossScaleSolverProblem& problem) {
  const std::size_t n = problem.aggregated.size();
  if (n == 0) throw std::invalid_argument("solve_cross_scale: need at least one scale");
  if (!(problem.lambda >= 0.0) || !std::isfinite(problem.lambda)) {
    throw std::invalid_argument("solve_cross_scale: lambda must be finite and >= 0");
  }
  const double lambda = problem.lambda;
  std::vector<double> diag(n, 1.0);
  if (n > 1) {
    for (std::size_t i = 0; i < n; ++i) {
      const double degree = (i == 0 || i + 1 == n) ? 1.0 : 2.0;
      diag[i] += lambda * degree;
    }
  }
  const double off = -lambda;

  CrossScaleSolution sol;
  sol.P = Tensor({n, n});
  for (std::size_t col = 0; col < n; ++col) {
    std::vector<double> unit(n, 0.0);
    unit[col] = 1.0;
    const auto x = solve_tridiagonal(diag, off, std::move(unit));
    for (std::size_t row = 0; row < n; ++row) sol.P(row, col) = x[row];
  }
  sol.v_hat = solve_tridiagonal(diag, off, problem.aggregated);
  return sol;
}

CrossScaleSolverProblem cross_scale_problem(std::span<const std::vector<double>> costs,
                                            std::span<const std::vector<double>> weights,
                                            double lambda) {
  if (costs.size() != weights.size() || costs.empty()) {
    throw std::invalid_argument("cross_scale_problem: need matching non-empty cost/weight sets");
  }
  CrossScaleSolverProblem problem;
  problem.lambda = lambda;
  for (std::size_t s = 0; s < costs.size(); ++s) {
    if (costs[s].size() != weights[s].size()) {
      throw std::invalid_argument("cross_scale_problem: scale " + std::to_string(s + 1) +
                                  " has mismatched cost/weight counts");
    }
    double total = 0.0, acc = 0.0;
    for (std::size_t q = 0; q < costs[s].size(); ++q) {
      total += weights[s][q];
      acc += weights[s][q] * costs[s][q];
    }
    if (std::abs(total - 1.0) > 1e-12) {
      throw std::invalid_argument("cross_scale_problem: weights of scale " + std::to_string(s + 1) +
                                  " sum to " + std::to_string(total) + ", not 1");
    }
    problem.aggregated.push_back(acc);
  }
  return problem;
}

}  // namespace aastereo
