#include <gtest/gtest.h>

#include <random>

#include "aastereo/error.hpp"
#include "aastereo/feature_extractor.hpp"
#include "aastereo/gradcheck.hpp"

using namespace aastereo;

namespace {

Tensor conv_oracle(const Tensor& in, const Tensor& w, const Tensor& b, ConvGeometry g) {
  const long cin = in.dim(0), h = in.dim(1), wd = in.dim(2);
  const long cout = w.dim(0), k = w.dim(2);
  const long oh = conv_output_extent(h, k, g), ow = conv_output_extent(wd, k, g);
  const long s = g.stride, p = g.padding;
  Tensor out({static_cast<std::size_t>(cout), static_cast<std::size_t>(oh),
              static_cast<std::size_t>(ow)});
  for (long o = 0; o < cout; ++o)
    for (long y = 0; y < oh; ++y)
      for (long x = 0; x < ow; ++x) {
        double acc = b[o];
        for (long c = 0; c < cin; ++c)
          for (long i = 0; i < k; ++i)
            for (long j = 0; j < k; ++j) {
              long yy = y * s + i - p, xx = x * s + j - p;
              if (yy < 0 || yy >= h || xx < 0 || xx >= wd) continue;
              acc += w(o, c, i, j) * in(c, yy, xx);
            }
        out(o, y, x) = acc;
      }
  return out;
}

}  // namespace

TEST(Conv2d, IdentityOneByOne) {
  std::mt19937_64 rng(1);
  Tensor x = random_uniform({4, 5, 6}, -1, 1, rng);
  EXPECT_EQ(apply_conv(make_identity_conv(4), x), x);
}

TEST(Conv2d, AveragingKernelKeepsConstantInterior) {
  Tensor x({1, 6, 6}, 2.5);
  ConvLayerParams avg = make_zero_conv(1, 1, 3, {1, 0});
  avg.weight.fill(1.0 / 9.0);
  Tensor y = apply_conv(avg, x);
  EXPECT_EQ(y.shape(), (Shape{1, 4, 4}));
  for (double v : y.data()) EXPECT_NEAR(v, 2.5, 1e-15);
}

TEST(Conv2d, MatchesLoopOracleExactly) {
  std::mt19937_64 rng(2);
  Tensor x = random_uniform({2, 5, 5}, -1, 1, rng);
  Tensor w = random_uniform({3, 2, 3, 3}, -1, 1, rng);
  Tensor b = random_uniform({3}, -1, 1, rng);
  EXPECT_LT(max_abs_diff(conv2d_forward(x, w, b, {1, 1}), conv_oracle(x, w, b, {1, 1})), 1e-15);
}

TEST(Conv2d, MatchesLoopOracleOnRandomShapes) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> ext(1, 16), ch(1, 3), kern(0, 2), stride(1, 3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 * kern(rng) + 1;
    ConvGeometry g{stride(rng), k / 2};
    const std::size_t cin = ch(rng), cout = ch(rng);
    Tensor x = random_uniform({cin, ext(rng), ext(rng)}, -1, 1, rng);
    Tensor w = random_uniform({cout, cin, k, k}, -1, 1, rng);
    Tensor b = random_uniform({cout}, -1, 1, rng);
    EXPECT_LT(max_abs_diff(conv2d_forward(x, w, b, g), conv_oracle(x, w, b, g)), 1e-12)
        << "trial " << trial;
  }
}

TEST(Conv2d, RejectsChannelMismatch) {
  Tensor x({2, 4, 4});
  Tensor w({1, 3, 3, 3});
  EXPECT_THROW(conv2d_forward(x, w, Tensor({1}), {1, 1}), ShapeError);
}

TEST(Conv2d, GradientCheckAllInputs) {
  for (ConvGeometry g : {ConvGeometry{1, 1}, ConvGeometry{2, 1}, ConvGeometry{3, 1}}) {
    auto op = make_tape_op("conv2d", [g](Tape& tape, std::span<const Var> in) {
      return conv2d(tape, in[0], in[1], in[2], g);
    });
    std::mt19937_64 rng(4);
    std::vector<Tensor> in{random_uniform({2, 7, 6}, -1, 1, rng),
                           random_uniform({3, 2, 3, 3}, -1, 1, rng),
                           random_uniform({3}, -1, 1, rng)};
    auto report = finite_difference_check(op, in);
    EXPECT_TRUE(report.pass) << "stride " << g.stride << ": " << report.max_relative_error;
  }
}

TEST(NormalizeImage, Examples) {
  std::mt19937_64 rng(5);
  Tensor x = random_uniform({3, 4, 4}, 0, 1, rng);
  std::vector<double> zero{0, 0, 0}, one{1, 1, 1};
  EXPECT_EQ(normalize_image(x, zero, one), x);

  Tensor red({3, 1, 1}, {0.485, 0.5, 0.5});
  EXPECT_EQ(normalize_image(red, kImageNetMean, kImageNetStd)[0], 0.0);

  Tensor c({3, 3, 3}, 0.3);
  Tensor y = normalize_image(c, kImageNetMean, kImageNetStd);
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(y[ch * 9 + i], y[ch * 9]);
}

TEST(NormalizeImage, RejectsNonPositiveStd) {
  Tensor x({1, 2, 2}, 0.5);
  std::vector<double> mean{0}, bad{0};
  EXPECT_THROW(normalize_image(x, mean, bad), std::invalid_argument);
}

TEST(ExtractPyramid, ShapesForDefaultConfig) {
  std::mt19937_64 rng(6);
  auto fx = make_feature_extractor(3, 8, 3, 3, rng);
  auto pyr = extract_pyramid(fx, random_uniform({3, 48, 96}, 0, 1, rng));
  ASSERT_EQ(pyr.levels.size(), 3u);
  const std::size_t expect[3][2] = {{16, 32}, {8, 16}, {4, 8}};
  for (std::size_t s = 0; s < 3; ++s) {
    EXPECT_EQ(pyr.levels[s].scale, s + 1);
    EXPECT_EQ(pyr.levels[s].channels(), 8u);
    EXPECT_EQ(pyr.levels[s].height(), expect[s][0]);
    EXPECT_EQ(pyr.levels[s].width(), expect[s][1]);
  }
}

TEST(ExtractPyramid, OddSizesUseCeilDivision) {
  std::mt19937_64 rng(7);
  auto fx = make_feature_extractor(3, 4, 3, 3, rng);
  auto pyr = extract_pyramid(fx, random_uniform({3, 25, 37}, 0, 1, rng));
  const auto hs = pyramid_extents(25, 3, 3), ws = pyramid_extents(37, 3, 3);
  EXPECT_EQ(hs, (std::vector<std::size_t>{9, 5, 3}));
  EXPECT_EQ(ws, (std::vector<std::size_t>{13, 7, 4}));
  for (std::size_t s = 0; s < 3; ++s) {
    EXPECT_EQ(pyr.levels[s].height(), hs[s]);
    EXPECT_EQ(pyr.levels[s].width(), ws[s]);
    if (s > 0) {
      EXPECT_EQ(pyr.levels[s].height(), (pyr.levels[s - 1].height() + 1) / 2);
      EXPECT_EQ(pyr.levels[s].width(), (pyr.levels[s - 1].width() + 1) / 2);
    }
  }
}

TEST(ExtractPyramid, SharedWeightsGiveIdenticalPyramids) {
  std::mt19937_64 rng(8);
  auto fx = make_feature_extractor(3, 4, 3, 2, rng);
  Tensor img = random_uniform({3, 12, 18}, 0, 1, rng);
  auto a = extract_pyramid(fx, img);
  auto b = extract_pyramid(fx, img);
  for (std::size_t s = 0; s < 2; ++s) EXPECT_EQ(a.levels[s].values, b.levels[s].values);
}

TEST(ExtractPyramid, ZeroImageZeroBiasGivesZeroFeatures) {
  std::mt19937_64 rng(9);
  auto fx = make_feature_extractor(3, 4, 3, 3, rng);
  auto pyr = extract_pyramid(fx, Tensor({3, 24, 24}));
  for (const auto& level : pyr.levels) EXPECT_EQ(max_abs(level.values), 0.0);
}

TEST(ExtractPyramid, RejectsTooSmallImage) {
  std::mt19937_64 rng(10);
  auto fx = make_feature_extractor(3, 4, 3, 3, rng);
  EXPECT_THROW(extract_pyramid(fx, Tensor({3, 11, 40})), ShapeError);
}
