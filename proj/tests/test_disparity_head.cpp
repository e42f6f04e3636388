#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "aastereo/disparity_head.hpp"
#include "aastereo/error.hpp"
#include "aastereo/gradcheck_suite.hpp"

using namespace aastereo;

namespace {

double softmax_expectation(const std::vector<double>& c) {
  double mx = c[0];
  for (double v : c) mx = std::max(mx, v);
  double z = 0, e = 0;
  for (std::size_t d = 0; d < c.size(); ++d) {
    const double w = std::exp(c[d] - mx);
    z += w;
    e += static_cast<double>(d) * w;
  }
  return e / z;
}

struct MaskedGrads {
  double loss;
  Tensor pred, gt, pseudo;
};

MaskedGrads masked_grads(const Tensor& pred, const Tensor& gt, const Tensor& pseudo,
                         const Tensor& mask) {
  Tape tape;
  Var p = tape.variable(pred), g = tape.variable(gt), s = tape.variable(pseudo);
  Var loss = masked_loss(tape, p, g, s, mask);
  tape.backward(loss);
  return {tape.value(loss).item(), tape.grad(p), tape.grad(g), tape.grad(s)};
}

}  // namespace

TEST(SoftArgmin, UniformCostsGiveMidpoint) {
  Tensor vol({4, 2, 3}, 0.37);
  Tensor d = soft_argmin_forward(vol);
  EXPECT_EQ(d.shape(), (Shape{2, 3}));
  for (double v : d.data()) EXPECT_EQ(v, 1.5);
}

TEST(SoftArgmin, SaturatedPeak) {
  Tensor vol({4, 1, 1}, {0, 0, 20, 0});
  EXPECT_NEAR(soft_argmin_forward(vol)[0], 2.0, 1e-7);
}

TEST(SoftArgmin, MatchesLoopOracle) {
  std::mt19937_64 rng(1);
  Tensor vol = random_uniform({8, 3, 4}, -3, 3, rng);
  Tensor d = soft_argmin_forward(vol);
  for (std::size_t p = 0; p < 12; ++p) {
    std::vector<double> c(8);
    for (std::size_t k = 0; k < 8; ++k) c[k] = vol[k * 12 + p];
    EXPECT_NEAR(d[p], softmax_expectation(c), 1e-12);
  }
}

TEST(SoftArgmin, StaysInRangeAndIsShiftInvariant) {
  std::mt19937_64 rng(2);
  Tensor vol = random_uniform({6, 4, 5}, -50, 50, rng);
  Tensor d = soft_argmin_forward(vol);
  Tensor shifted = vol;
  for (std::size_t p = 0; p < 20; ++p) {
    EXPECT_GE(d[p], 0.0);
    EXPECT_LE(d[p], 5.0);
    const double c = 17.0 * static_cast<double>(p) - 100.0;
    for (std::size_t k = 0; k < 6; ++k) shifted[k * 20 + p] += c;
  }
  EXPECT_LT(max_abs_diff(d, soft_argmin_forward(shifted)), 1e-12);
}

TEST(SoftArgmin, SharpeningMovesTowardArgmax) {
  std::vector<double> base{-2, -1, 0, -1, -2, -3, -4, -5};
  double prev = 1e9;
  for (double alpha = 1.0; alpha <= 8.0; alpha += 0.5) {
    std::vector<double> c;
    for (double v : base) c.push_back(alpha * v);
    Tensor vol({8, 1, 1}, c);
    const double dist = std::abs(soft_argmin_forward(vol)[0] - 2.0);
    EXPECT_LT(dist, prev) << alpha;
    prev = dist;
  }
}

TEST(SoftArgmin, DisparityMapOverload) {
  auto map = soft_argmin(Tensor({4, 2, 2}, 1.0));
  EXPECT_FALSE(map.has_mask());
  EXPECT_EQ(map.height(), 2u);
  EXPECT_EQ(map.valid_count(), 4u);
}

TEST(SmoothL1, Examples) {
  EXPECT_EQ(smooth_l1(0.0), 0.0);
  EXPECT_EQ(smooth_l1(0.5), 0.125);
  EXPECT_EQ(smooth_l1(2.0), 1.5);
  EXPECT_EQ(smooth_l1(-2.0), 1.5);
  EXPECT_EQ(smooth_l1_derivative(0.5), 0.5);
  EXPECT_EQ(smooth_l1_derivative(-3.0), -1.0);
}

TEST(MaskedLoss, AllValidIgnoresPseudo) {
  std::mt19937_64 rng(3);
  Tensor pred = random_uniform({4, 5}, 0, 8, rng), gt = random_uniform({4, 5}, 0, 8, rng);
  Tensor mask({4, 5}, 1.0);
  auto a = masked_grads(pred, gt, random_uniform({4, 5}, 0, 8, rng), mask);
  auto b = masked_grads(pred, gt, random_uniform({4, 5}, 0, 8, rng), mask);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.pred, b.pred);
  EXPECT_EQ(a.gt, b.gt);
  for (double v : a.pseudo.data()) EXPECT_EQ(v, 0.0);
}

TEST(MaskedLoss, AllInvalidIgnoresGt) {
  std::mt19937_64 rng(4);
  Tensor pred = random_uniform({4, 5}, 0, 8, rng), pseudo = random_uniform({4, 5}, 0, 8, rng);
  Tensor mask({4, 5}, 0.0);
  auto a = masked_grads(pred, random_uniform({4, 5}, 0, 8, rng), pseudo, mask);
  auto b = masked_grads(pred, random_uniform({4, 5}, 0, 8, rng), pseudo, mask);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.pred, b.pred);
  EXPECT_EQ(a.pseudo, b.pseudo);
  for (double v : a.gt.data()) EXPECT_EQ(v, 0.0);
}

TEST(MaskedLoss, MixedMaskRoutesGradients) {
  std::mt19937_64 rng(5);
  Tensor pred = random_uniform({3, 4}, 0, 8, rng);
  Tensor mask({3, 4});
  for (std::size_t i = 0; i < 12; i += 3) mask[i] = 1.0;
  auto g = masked_grads(pred, random_uniform({3, 4}, 0, 8, rng), random_uniform({3, 4}, 0, 8, rng),
                        mask);
  for (std::size_t i = 0; i < 12; ++i) {
    if (mask[i] != 0.0) {
      EXPECT_EQ(g.pseudo[i], 0.0);
      EXPECT_NE(g.gt[i], 0.0);
    } else {
      EXPECT_EQ(g.gt[i], 0.0);
      EXPECT_NE(g.pseudo[i], 0.0);
    }
  }
}

TEST(MaskedLoss, PerfectPredictionIsZero) {
  Tensor x({3, 3}, 2.5);
  DisparityMap gt{x, Tensor({3, 3}, 1.0)};
  EXPECT_EQ(masked_loss(x, gt, x), 0.0);
}

TEST(MaskedLoss, MeanOverValidPixelsWithoutPseudo) {
  Tensor pred({1, 4}, {0, 0, 0, 0});
  Tensor mask({1, 4}, {1, 1, 0, 0});
  DisparityMap gt{Tensor({1, 4}, {0.5, 2.0, 100, 100}), mask};
  EXPECT_DOUBLE_EQ(masked_loss(pred, gt), (0.125 + 1.5) / 2);
}

TEST(MaskedLoss, RejectsAllInvalidWithoutPseudo) {
  DisparityMap gt{Tensor({2, 2}), Tensor({2, 2})};
  EXPECT_THROW(masked_loss(Tensor({2, 2}), gt), std::invalid_argument);
}

TEST(MaskedLoss, RejectsShapeMismatch) {
  DisparityMap gt{Tensor({2, 3})};
  EXPECT_THROW(masked_loss(Tensor({2, 2}), gt), ShapeError);
}

TEST(TotalLoss, Examples) {
  std::vector<double> ones(5, 1.0);
  EXPECT_NEAR(total_loss(ones, LossWeights{{1, 1, 1, 2.0 / 3, 1.0 / 3}}), 4.0, 1e-15);
  EXPECT_NEAR(total_loss(ones, LossWeights::defaults(5)), 4.0, 1e-15);
  EXPECT_EQ(total_loss(ones, LossWeights{std::vector<double>(5, 0.0)}), 0.0);
  std::vector<double> one{0.75};
  EXPECT_EQ(total_loss(one, LossWeights{{1.0}}), 0.75);
}

TEST(TotalLoss, DefaultWeights) {
  EXPECT_EQ(LossWeights::defaults(1).values, (std::vector<double>{1}));
  EXPECT_EQ(LossWeights::defaults(4).values, (std::vector<double>{1, 1, 2.0 / 3, 1.0 / 3}));
}

TEST(TotalLoss, RejectsMismatchAndNegativeWeights) {
  std::vector<double> two{1, 1};
  EXPECT_THROW(total_loss(two, LossWeights{{1.0}}), std::invalid_argument);
  EXPECT_THROW(total_loss(two, LossWeights{{1.0, -0.1}}), std::invalid_argument);
}

TEST(Evaluate, PerfectPrediction) {
  Tensor x({2, 2}, {1, 2, 3, 4});
  auto r = evaluate(x, DisparityMap{x});
  EXPECT_EQ(r.epe, 0.0);
  EXPECT_EQ(r.over_1px, 0.0);
  EXPECT_EQ(r.d1, 0.0);
  EXPECT_EQ(r.evaluated_pixels, 4u);
}

TEST(Evaluate, HalfOffByTwo) {
  auto r = evaluate(Tensor({1, 2}, {1, 2}), DisparityMap{Tensor({1, 2}, {1, 4})});
  EXPECT_DOUBLE_EQ(r.epe, 1.0);
  EXPECT_DOUBLE_EQ(r.over_1px, 50.0);
  EXPECT_DOUBLE_EQ(r.d1, 0.0);
}

TEST(Evaluate, D1Boundary) {
  auto r = evaluate(Tensor({1, 1}, {104}), DisparityMap{Tensor({1, 1}, {100})});
  EXPECT_EQ(r.over_1px, 100.0);
  EXPECT_EQ(r.d1, 0.0);
  auto s = evaluate(Tensor({1, 1}, {14}), DisparityMap{Tensor({1, 1}, {10})});
  EXPECT_EQ(s.d1, 100.0);
}

TEST(Evaluate, MaskExcludesPixels) {
  DisparityMap gt{Tensor({1, 3}, {1, 2, 3}), Tensor({1, 3}, {1, 0, 1})};
  auto r = evaluate(Tensor({1, 3}, {1, 50, 3}), gt);
  EXPECT_EQ(r.epe, 0.0);
  EXPECT_EQ(r.evaluated_pixels, 2u);
}

TEST(Evaluate, RejectsEmptyMask) {
  DisparityMap gt{Tensor({2, 2}), Tensor({2, 2})};
  EXPECT_THROW(evaluate(Tensor({2, 2}), gt), EmptyEvaluationError);
}

TEST(MetricsReport, Serialization) {
  MetricsReport r{1.25, 50, 0, 4};
  EXPECT_EQ(r.to_text(), "epe=1.25\nover_1px=50\nd1=0\nevaluated_pixels=4\n");
  EXPECT_EQ(r.to_line(), "epe=1.25\tover_1px=50\td1=0\tevaluated_pixels=4");
}

TEST(DisparityHead, GradientChecks) {
  for (const char* name : {"soft_argmin", "smooth_l1", "masked_loss"}) {
    auto c = make_gradcheck_case(name);
    auto report = finite_difference_check(c.op, c.inputs, c.options);
    EXPECT_TRUE(report.pass) << name << ": " << report.max_relative_error;
  }
}
