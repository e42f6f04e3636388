#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "aastereo/cost_volume.hpp"
#include "aastereo/error.hpp"
#include "aastereo/gradcheck.hpp"

using namespace aastereo;

namespace {

// Random features with unit-norm vectors at every pixel.
Tensor unit_features(std::size_t n, std::size_t h, std::size_t w, std::mt19937_64& rng) {
  Tensor f = random_normal({n, h, w}, 1.0, rng);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double norm = 0;
      for (std::size_t c = 0; c < n; ++c) norm += f(c, y, x) * f(c, y, x);
      norm = std::sqrt(norm);
      for (std::size_t c = 0; c < n; ++c) f(c, y, x) /= norm;
    }
  return f;
}

std::size_t argmax_d(const Tensor& vol, std::size_t y, std::size_t x) {
  std::size_t best = 0;
  for (std::size_t d = 1; d < vol.dim(0); ++d)
    if (vol(d, y, x) > vol(best, y, x)) best = d;
  return best;
}

}  // namespace

TEST(Correlate, ConstantFeatures) {
  Tensor f({2, 3, 6}, 1.0);
  Tensor c = correlate_forward(f, f, 4);
  for (std::size_t d = 0; d < 4; ++d)
    for (std::size_t y = 0; y < 3; ++y)
      for (std::size_t x = 0; x < 6; ++x) {
        EXPECT_EQ(c(d, y, x), x >= d ? 1.0 : 0.0);
        EXPECT_EQ(CostVolume::valid(d, y, x), x >= d);
      }
}

TEST(Correlate, SinglePixelInnerProduct) {
  Tensor l({2, 1, 6}), r({2, 1, 6});
  l(0, 0, 5) = 2;
  r(0, 0, 5) = 1;
  r(1, 0, 5) = 3;
  EXPECT_EQ(correlate_forward(l, r, 1)(0, 0, 5), 1.0);
}

TEST(Correlate, MatchesTripleLoopOracle) {
  std::mt19937_64 rng(1);
  Tensor l = random_uniform({3, 8, 8}, -1, 1, rng);
  Tensor r = random_uniform({3, 8, 8}, -1, 1, rng);
  Tensor c = correlate_forward(l, r, 4);
  for (std::size_t d = 0; d < 4; ++d)
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x) {
        double expect = 0;
        if (x >= d) {
          for (std::size_t k = 0; k < 3; ++k) expect += l(k, y, x) * r(k, y, x - d);
          expect /= 3;
        }
        EXPECT_NEAR(c(d, y, x), expect, 1e-12);
      }
}

TEST(Correlate, RejectsDisparityWiderThanFeatures) {
  Tensor f({1, 2, 4});
  EXPECT_THROW(correlate_forward(f, f, 5), ShapeError);
  EXPECT_THROW(correlate_forward(f, Tensor({1, 2, 5}), 2), ShapeError);
}

TEST(Correlate, InvalidCellsPassNoGradient) {
  std::mt19937_64 rng(2);
  Tensor l = random_uniform({2, 3, 5}, -1, 1, rng);
  Tensor r = random_uniform({2, 3, 5}, -1, 1, rng);
  // Cotangent only on invalid cells.
  Tensor g({3, 3, 5});
  for (std::size_t d = 0; d < 3; ++d)
    for (std::size_t y = 0; y < 3; ++y)
      for (std::size_t x = 0; x < d; ++x) g(d, y, x) = 1.0;
  auto grads = correlate_backward(l, r, g);
  EXPECT_EQ(max_abs(grads.left), 0.0);
  EXPECT_EQ(max_abs(grads.right), 0.0);
}

TEST(Correlate, SelfMatchPeaksAtZeroForEqualNormFeatures) {
  std::mt19937_64 rng(3);
  Tensor f = unit_features(8, 5, 12, rng);
  Tensor c = correlate_forward(f, f, 6);
  for (std::size_t y = 0; y < 5; ++y)
    for (std::size_t x = 0; x < 12; ++x) EXPECT_EQ(argmax_d(c, y, x), 0u);
}

TEST(Correlate, ShiftingRightFeaturesShiftsArgmax) {
  std::mt19937_64 rng(4);
  const std::size_t w = 16, delta = 3;
  // Constant bands: each column carries one unit vector on every row.
  Tensor band = unit_features(8, 1, w + delta, rng);
  Tensor l({8, 4, w}), r({8, 4, w});
  for (std::size_t c = 0; c < 8; ++c)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        l(c, y, x) = band(c, 0, x);
        // right(x - delta) == left(x)
        r(c, y, x) = band(c, 0, x + delta);
      }
  Tensor c = correlate_forward(l, r, 6);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 6; x < w; ++x) EXPECT_EQ(argmax_d(c, y, x), delta) << x;
}

TEST(Correlate, GradientCheckBothInputs) {
  auto op = make_tape_op("correlate", [](Tape& tape, std::span<const Var> in) {
    return correlate(tape, in[0], in[1], 4);
  });
  std::mt19937_64 rng(5);
  std::vector<Tensor> in{random_uniform({3, 4, 6}, -1, 1, rng),
                         random_uniform({3, 4, 6}, -1, 1, rng)};
  auto report = finite_difference_check(op, in);
  EXPECT_TRUE(report.pass) << report.max_relative_error;
}

TEST(ScaleDisparities, Examples) {
  EXPECT_EQ(scale_disparities(192, 3, 3), (std::vector<std::size_t>{64, 32, 16}));
  EXPECT_EQ(scale_disparities(24, 3, 2), (std::vector<std::size_t>{8, 4}));
  EXPECT_EQ(scale_disparities(24, 3, 1), (std::vector<std::size_t>{8}));
}

TEST(ScaleDisparities, HalvesAcrossScales) {
  auto d = scale_disparities(96, 3, 4);
  for (std::size_t s = 1; s < d.size(); ++s) EXPECT_EQ(d[s], d[s - 1] / 2);
}

TEST(ScaleDisparities, DivisibilityErrorNamesScale) {
  try {
    scale_disparities(18, 3, 3);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("scale 3"), std::string::npos) << e.what();
  }
}

TEST(BuildPyramid, UsesPerScaleRanges) {
  std::mt19937_64 rng(6);
  FeaturePyramid l, r;
  l.base_factor = r.base_factor = 3;
  std::size_t h = 8, w = 16;
  for (std::size_t s = 1; s <= 2; ++s, h /= 2, w /= 2) {
    l.levels.push_back({s, random_uniform({4, h, w}, -1, 1, rng)});
    r.levels.push_back({s, random_uniform({4, h, w}, -1, 1, rng)});
  }
  auto vols = build_pyramid(l, r, 24);
  ASSERT_EQ(vols.size(), 2u);
  EXPECT_EQ(vols[0].values.shape(), (Shape{8, 8, 16}));
  EXPECT_EQ(vols[1].values.shape(), (Shape{4, 4, 8}));
  EXPECT_EQ(vols[1].scale, 2u);
}
