#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "aastereo/error.hpp"
#include "aastereo/gradcheck.hpp"
#include "aastereo/intra_scale.hpp"
#include "aastereo/ops.hpp"

using namespace aastereo;

namespace {

DifferentiableOp unary(const char* name, Var (*fn)(Tape&, Var)) {
  return make_tape_op(name, [fn](Tape& tape, std::span<const Var> in) { return fn(tape, in[0]); });
}

}  // namespace

TEST(Tensor, ShapeAndIndexing) {
  Tensor t({2, 3}, {0, 1, 2, 3, 4, 5});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t(1, 2), 5.0);
  EXPECT_EQ(t(0, 1), 1.0);
  EXPECT_EQ(t.reshaped({3, 2})(2, 1), 5.0);
  EXPECT_THROW(Tensor({2, 0}), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), ShapeError);
  EXPECT_THROW(t.reshaped({4, 2}), ShapeError);
}

TEST(Tensor, Arithmetic) {
  Tensor a({3}, {1, 2, 3});
  Tensor b({3}, {4, 5, 6});
  EXPECT_EQ((a + b).values(), (std::vector<double>{5, 7, 9}));
  EXPECT_EQ((a * 2.0).values(), (std::vector<double>{2, 4, 6}));
  EXPECT_EQ(dot(a, b), 32.0);
  EXPECT_THROW(a += Tensor({2}), ShapeError);
}

TEST(ForwardBackward, SquareGradient) {
  auto op = unary("square", ops::square);
  std::vector<Tensor> in{Tensor({2}, {2, 3})};
  auto g = forward_backward(op, in, Tensor({2}, {1, 1}));
  EXPECT_EQ(g[0].values(), (std::vector<double>{4, 6}));
}

TEST(ForwardBackward, SumGradient) {
  auto op = unary("sum", ops::sum);
  std::vector<Tensor> in{Tensor({3}, {1, 2, 3})};
  auto g = forward_backward(op, in, Tensor::scalar(1.0));
  EXPECT_EQ(g[0].values(), (std::vector<double>{1, 1, 1}));
}

TEST(ForwardBackward, SoftmaxUniformCotangentGivesZero) {
  auto op = unary("softmax", ops::softmax);
  std::vector<Tensor> in{Tensor({3}, 0.7)};
  auto g = forward_backward(op, in, Tensor({3}, 1.0));
  for (double v : g[0].data()) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(ForwardBackward, CotangentShapeMismatchNamesOpAndShapes) {
  auto op = unary("square", ops::square);
  std::vector<Tensor> in{Tensor({2}, {2, 3})};
  try {
    forward_backward(op, in, Tensor({3}, 1.0));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("square"), std::string::npos);
    EXPECT_NE(msg.find("[3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2]"), std::string::npos) << msg;
  }
}

TEST(Tape, GradientsAccumulateOverSharedInputs) {
  Tape tape;
  Var x = tape.variable(Tensor({2}, {1.5, -2.0}));
  // y = x*x + 3x summed
  Var y = ops::sum(tape, ops::add(tape, ops::square(tape, x), ops::scale(tape, x, 3.0)));
  tape.backward(y);
  Tensor g = tape.grad(x);
  EXPECT_DOUBLE_EQ(g[0], 2 * 1.5 + 3);
  EXPECT_DOUBLE_EQ(g[1], 2 * -2.0 + 3);
}

TEST(Tape, BackwardIsLinearInOutputs) {
  std::mt19937_64 rng(5);
  Tensor x0 = random_uniform({4}, -1, 1, rng);
  auto grad_of = [&](bool use_a, bool use_b) {
    Tape tape;
    Var x = tape.variable(x0);
    Var a = ops::sum(tape, ops::square(tape, x));
    Var b = ops::sum(tape, ops::sigmoid(tape, x));
    if (use_a) tape.backward(a);
    if (use_b) tape.backward(b);
    return tape.grad(x);
  };
  Tensor both = grad_of(true, true);
  Tensor separate = grad_of(true, false) + grad_of(false, true);
  EXPECT_LT(max_abs_diff(both, separate), 1e-15);
}

TEST(Tape, ConstantsReceiveNoGradient) {
  Tape tape;
  Var c = tape.constant(Tensor({2}, 1.0));
  Var y = ops::sum(tape, ops::square(tape, c));
  EXPECT_FALSE(tape.requires_grad(y));
  tape.backward(y);
  EXPECT_EQ(max_abs(tape.grad(c)), 0.0);
}

TEST(Tape, ReplayIsBitwiseDeterministic) {
  auto run = [] {
    std::mt19937_64 rng(42);
    Tape tape;
    Var x = tape.variable(random_normal({3, 4}, 1.0, rng));
    Var y = ops::sum(tape, ops::leaky_relu(tape, ops::softmax(tape, x), 0.1));
    tape.backward(y);
    return tape.grad(x);
  };
  EXPECT_EQ(run(), run());
}

TEST(GradCheck, SquareAtThree) {
  auto op = unary("square", ops::square);
  std::vector<Tensor> in{Tensor::scalar(3.0)};
  GradCheckOptions opts;
  opts.step = 1e-4;
  auto report = finite_difference_check(op, in, opts);
  EXPECT_TRUE(report.pass);
  EXPECT_LT(report.max_relative_error, 1e-8);
}

TEST(GradCheck, BilinearSampleInteriorPoint) {
  DifferentiableOp op = make_tape_op("bilinear_sample", [](Tape& tape, std::span<const Var> in) {
    return bilinear_sample(tape, in[0], in[1]);
  });
  std::mt19937_64 rng(3);
  std::vector<Tensor> in{random_uniform({5, 5}, -1, 1, rng), Tensor({2}, {1.37, 2.61})};
  auto report = finite_difference_check(op, in);
  EXPECT_TRUE(report.pass) << report.max_relative_error;
  EXPECT_EQ(report.per_input_error.size(), 2u);
}

TEST(GradCheck, ArgmaxFailsWithoutThrowing) {
  DifferentiableOp argmax{
      "argmax",
      [](std::span<const Tensor> in) {
        const auto& x = in[0];
        std::size_t best = 0;
        for (std::size_t i = 1; i < x.size(); ++i)
          if (x[i] > x[best]) best = i;
        return Tensor::scalar(static_cast<double>(best));
      },
      [](std::span<const Tensor> in, const Tensor&) {
        return std::vector<Tensor>{Tensor::zeros_like(in[0])};
      }};
  // Two near-tied entries: a central step flips the argmax.
  std::vector<Tensor> in{Tensor({3}, {0.1, 1.0, 1.0 + 1e-7})};
  GradCheckReport report;
  ASSERT_NO_THROW(report = finite_difference_check(argmax, in));
  EXPECT_FALSE(report.pass);
}

TEST(GradCheck, NonFiniteDifferenceMarksFailure) {
  DifferentiableOp blowup{
      "blowup",
      [](std::span<const Tensor> in) {
        double x = in[0][0];
        return Tensor::scalar(x > 0 ? std::log(x) : std::nan(""));
      },
      [](std::span<const Tensor> in, const Tensor& ct) {
        return std::vector<Tensor>{Tensor::scalar(ct[0] / in[0][0])};
      }};
  std::vector<Tensor> in{Tensor::scalar(1e-9)};
  GradCheckOptions opts;
  opts.step = 1e-6;
  auto report = finite_difference_check(blowup, in, opts);
  EXPECT_FALSE(report.pass);
  EXPECT_TRUE(std::isinf(report.max_relative_error));
}

TEST(GradCheck, RejectsNonPositiveStep) {
  auto op = unary("square", ops::square);
  std::vector<Tensor> in{Tensor::scalar(1.0)};
  GradCheckOptions opts;
  opts.step = 0.0;
  EXPECT_THROW(finite_difference_check(op, in, opts), std::invalid_argument);
}

TEST(GradCheck, ChainMatchesManualComposition) {
  // f(g(x)) with g = square and f = softmax; the end-to-end vjp must equal
  // g's vjp applied to f's vjp.
  auto g = unary("square", ops::square);
  auto f = unary("softmax", ops::softmax);
  auto fg = make_tape_op("softmax_of_square", [](Tape& tape, std::span<const Var> in) {
    return ops::softmax(tape, ops::square(tape, in[0]));
  });
  std::mt19937_64 rng(9);
  Tensor x = random_uniform({5}, -1, 1, rng);
  Tensor ct = random_uniform({5}, -1, 1, rng);

  std::vector<Tensor> xin{x};
  std::vector<Tensor> gx{g.forward(xin)};
  Tensor inner = forward_backward(f, gx, ct)[0];
  Tensor manual = forward_backward(g, xin, inner)[0];
  Tensor direct = forward_backward(fg, xin, ct)[0];
  EXPECT_LT(max_abs_diff(manual, direct), 1e-10);
}

TEST(Ops, ElementwiseGradientsPass) {
  std::mt19937_64 rng(11);
  for (auto [name, fn] : std::vector<std::pair<const char*, Var (*)(Tape&, Var)>>{
           {"square", ops::square}, {"sigmoid", ops::sigmoid}, {"softmax", ops::softmax}}) {
    std::vector<Tensor> in{random_uniform({3, 4}, -2, 2, rng)};
    auto report = finite_difference_check(unary(name, fn), in);
    EXPECT_TRUE(report.pass) << name << " " << report.max_relative_error;
  }
}

TEST(Ops, ConcatAndReshape) {
  Tape tape;
  Var a = tape.variable(Tensor({1, 2}, {1, 2}));
  Var b = tape.variable(Tensor({2, 2}, {3, 4, 5, 6}));
  std::vector<Var> parts{a, b};
  Var c = ops::concat(tape, parts);
  EXPECT_EQ(tape.value(c).shape(), (Shape{3, 2}));
  Var r = ops::reshape(tape, c, {6});
  EXPECT_EQ(tape.value(r).values(), (std::vector<double>{1, 2, 3, 4, 5, 6}));
  tape.backward(ops::sum(tape, ops::scale(tape, r, 2.0)));
  EXPECT_EQ(tape.grad(b).values(), (std::vector<double>{2, 2, 2, 2}));
}
