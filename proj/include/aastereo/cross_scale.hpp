#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "aastereo/conv.hpp"

namespace aastereo {

// Bilinear resize of a C x H x W volume to C x target_h x target_w with
// half-pixel centers (source = (t + 0.5) * in/out - 0.5, clamped to the
// valid range). Downscaling along either axis is rejected.
Tensor bilinear_upsample_forward(const Tensor& volume, std::size_t target_h, std::size_t target_w);
Tensor bilinear_upsample_backward(const Tensor& grad_output, std::size_t source_h,
                                  std::size_t source_w);
Var bilinear_upsample(Tape& tape, Var volume, std::size_t target_h, std::size_t target_w);

// f_k for one (output scale s, input scale k) pair:
//   k == s: no layers (identity)
//   k <  s: s-k stride-2 3x3 convs, halving the disparity channels per step
//   k >  s: one 1x1 conv applied after bilinear upsampling
struct CsaBranch {
  std::vector<ConvLayerParams> convs;
};

struct CsaParams {
  // branches[s][k], zero-based scale indices.
  std::vector<std::vector<CsaBranch>> branches;

  std::size_t scales() const { return branches.size(); }
  void visit(const std::string& prefix, const ParamVisitor& visitor);
};

// Every cross-scale conv starts at zero, so the module is the identity on
// each scale at initialization. `disparities[s]` is D of scale s+1.
CsaParams make_csa(std::span<const std::size_t> disparities);
// Same topology with He-normal weights.
CsaParams make_random_csa(std::span<const std::size_t> disparities, std::mt19937_64& rng);

// C^s = sum_k f_k(C~^k) for every scale s. Rejects volumes whose shapes do
// not form a pyramid, and any branch output that misses the scale-s shape,
// naming (s, k).
std::vector<Var> csa(ParamBinder& params, const CsaParams& layer, std::span<const Var> volumes);

// ---------------------------------------------------------------------------
// Closed-form multi-scale solution: minimizing
//   sum_s (z_s - v~_s)^2 + lambda * sum_{s>=2} (z_s - z_{s-1})^2
// gives (I + lambda L) z = v~ with L the path-graph Laplacian over scales.

struct CrossScaleSolverProblem {
  std::vector<double> aggregated;  // v~, one entry per scale
  double lambda = 1.0;
};

struct CrossScaleSolution {
  Tensor P;                   // S x S, (I + lambda L)^-1
  std::vector<double> v_hat;  // P v~
};

CrossScaleSolution solve_cross_scale(const CrossScaleSolverProblem& problem);

// Builds v~ from per-scale window costs and weights, v~_s = sum_q w_q C_q.
// The reduction to (I + lambda L) z = v~ holds only when every weight set
// sums to 1; anything else is rejected.
CrossScaleSolverProblem cross_scale_problem(std::span<const std::vector<double>> costs,
                                            std::span<const std::vector<double>> weights,
                                            double lambda);

}  // namespace aastereo
