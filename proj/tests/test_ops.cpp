/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "insloc/error.hpp"
#include "insloc/gradcheck.hpp"
#include "insloc/ops.hpp"

using namespace insloc;

namespace {

constexpr double kGradTol = 1e-4;

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.data()) v = d(rng);
  return t;
}

// Reduces a tensor-valued op to a scalar with distinct per-element weights.
Var probe(const Var& out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ops::smooth_l1(out, random_tensor(out.shape(), rng, -2.0, 2.0), 1e6, 1.0);
}

double check(const std::function<Var()>& f, std::vector<Var> inputs) {
  auto r = finite_difference_check(f, inputs);
  EXPECT_GT(r.coordinates_checked, 0u);
  return r.max_relative_error;
}

}  // namespace

TEST(OpsGrad, Conv2dSameStride1) {
  std::mt19937_64 rng(1);
  Var x(random_tensor({2, 3, 5, 6}, rng), true);
  Var w(random_tensor({4, 3, 3, 3}, rng), true);
  Var b(random_tensor({4}, rng), true);
  EXPECT_LT(check([&] { return probe(ops::conv2d(x, w, b), 9); }, {x, w, b}), kGradTol);
}

TEST(OpsGrad, Conv2dSameStride2AndValid) {
  std::mt19937_64 rng(2);
  Var x(random_tensor({1, 2, 7, 6}, rng), true);
  Var w(random_tensor({3, 2, 3, 3}, rng), true);
  EXPECT_LT(check([&] { return probe(ops::conv2d(x, w, Var(), 2), 9); }, {x, w}), kGradTol);
  EXPECT_LT(check([&] { return probe(ops::conv2d(x, w, Var(), 1, ops::Padding::kValid), 9); },
                  {x, w}),
            kGradTol);
}

TEST(OpsGrad, TransposedConv) {
  std::mt19937_64 rng(3);
  Var x(random_tensor({2, 3, 3, 4}, rng), true);
  Var w(random_tensor({3, 2, 2, 2}, rng), true);
  Var b(random_tensor({2}, rng), true);
  EXPECT_LT(check([&] { return probe(ops::transposed_conv2d(x, w, b), 4); }, {x, w, b}), kGradTol);
}

TEST(OpsGrad, MaxPool) {
  std::mt19937_64 rng(4);
  Var x(random_tensor({2, 2, 4, 6}, rng), true);
  EXPECT_LT(check([&] { return probe(ops::maxpool2x2(x), 4); }, {x}), kGradTol);
}

TEST(OpsGrad, BatchNormTrainAndInfer) {
  std::mt19937_64 rng(5);
  Var x(random_tensor({2, 3, 3, 4}, rng), true);
  Var g(random_tensor({3}, rng, 0.5, 1.5), true);
  Var b(random_tensor({3}, rng), true);
  ops::BatchNormState st(3);
  EXPECT_LT(check([&] { return probe(ops::batchnorm2d(x, g, b, st, ops::Mode::kTrain), 6); },
                  {x, g, b}),
            kGradTol);
  EXPECT_LT(check([&] { return probe(ops::batchnorm2d(x, g, b, st, ops::Mode::kInfer), 6); },
                  {x, g, b}),
            kGradTol);
}

TEST(OpsGrad, Elementwise) {
  std::mt19937_64 rng(6);
  Var a(random_tensor({3, 4}, rng), true);
  Var b(random_tensor({3, 4}, rng), true);
  EXPECT_LT(check([&] { return probe(ops::relu(ops::add(a, ops::scale(b, 0.5))), 1); }, {a, b}),
            kGradTol);
  EXPECT_LT(check([&] { return ops::mean(ops::sigmoid(ops::scale(a, 3.0))); }, {a}), kGradTol);
  EXPECT_LT(check([&] { return ops::sum(ops::sigmoid(a)); }, {a}), kGradTol);
}

TEST(OpsGrad, ShapeOps) {
  std::mt19937_64 rng(7);
  Var a(random_tensor({1, 2, 3, 3}, rng), true);
  Var b(random_tensor({1, 3, 3, 3}, rng), true);
  std::vector<std::size_t> idx{0, 5, 5, 11, 44};
  EXPECT_LT(check([&] { return probe(ops::slice_channels(ops::concat_channels(a, b), 1, 3), 2); },
                  {a, b}),
            kGradTol);
  EXPECT_LT(check([&] {
              return probe(ops::gather(ops::reshape(ops::concat_channels(a, b), {45}), idx), 2);
            },
                  {a, b}),
            kGradTol);
}

TEST(OpsGrad, Linear) {
  std::mt19937_64 rng(8);
  Var x(random_tensor({5, 7}, rng), true);
  Var w(random_tensor({3, 7}, rng), true);
  Var b(random_tensor({3}, rng), true);
  EXPECT_LT(check([&] { return probe(ops::linear(x, w, b), 3); }, {x, w, b}), kGradTol);
}

TEST(OpsGrad, RoiAlign) {
  std::mt19937_64 rng(9);
  Var f(random_tensor({1, 3, 6, 8}, rng), true);
  std::vector<ops::Region> regions{{3.3, 5.1, 25.7, 17.9}, {-4.0, -2.5, 10.2, 30.0}, {20.1, 11.6, 36.4, 22.2}};
  EXPECT_LT(check([&] { return probe(ops::roi_align(f, regions, 3, 0.25), 5); }, {f}), kGradTol);
}

TEST(OpsGrad, Losses) {
  std::mt19937_64 rng(10);
  Var logits(random_tensor({4, 3}, rng, -2, 2), true);
  std::vector<int> t{0, 2, 1, 2};
  std::vector<double> cw{1.0, 2.5, 0.5};
  EXPECT_LT(check([&] { return ops::softmax_cross_entropy(logits, t); }, {logits}), kGradTol);
  EXPECT_LT(check([&] { return ops::softmax_cross_entropy(logits, t, cw); }, {logits}), kGradTol);

  Var pix(random_tensor({2, 2, 3, 2}, rng, -2, 2), true);
  std::vector<std::uint8_t> pt{0, 1, 1, 0, 0, 0, 1, 1, 1, 0, 1, 0};
  std::vector<double> pw{1.0, 4.0};
  EXPECT_LT(check([&] { return ops::softmax_cross_entropy_2d(pix, pt, pw); }, {pix}), kGradTol);

  Tensor bt({4, 3});
  for (std::size_t i = 0; i < bt.numel(); ++i) bt[i] = (i % 3) * 0.5;
  EXPECT_LT(check([&] { return ops::sigmoid_bce(logits, bt); }, {logits}), kGradTol);
  Tensor st = random_tensor({4, 3}, rng, -2, 2);
  EXPECT_LT(check([&] { return ops::smooth_l1(logits, st, 1.0 / 9.0, 3.0); }, {logits}),
            kGradTol);
}

TEST(OpsValues, CrossEntropyUniformLogitsIsLogC) {
  Var logits(Tensor({2, 4}, 0.3));
  std::vector<int> t{1, 3};
  EXPECT_NEAR(ops::softmax_cross_entropy(logits, t).value()[0], std::log(4.0), 1e-15);
}

TEST(OpsValues, SigmoidBceIsStableForLargeLogits) {
  Var logits(Tensor({2}, std::vector<double>{800.0, -800.0}));
  Tensor targets({2}, std::vector<double>{0.0, 1.0});
  EXPECT_DOUBLE_EQ(ops::sigmoid_bce(logits, targets).value()[0], 800.0);
}

TEST(OpsValues, SmoothL1Branches) {
  Var p(Tensor({2}, std::vector<double>{0.05, 2.0}));
  Tensor t({2}, 0.0);
  // 0.5 * 0.05^2 / 0.1 + (2.0 - 0.05)
  EXPECT_NEAR(ops::smooth_l1(p, t, 0.1, 1.0).value()[0], 0.0125 + 1.95, 1e-15);
}

TEST(OpsValues, ConvSamePaddingExtents) {
  Var x(Tensor({1, 1, 7, 5}, 1.0));
  Var w(Tensor({2, 1, 3, 3}, 1.0));
  EXPECT_EQ(ops::conv2d(x, w, Var()).shape(), (Shape{1, 2, 7, 5}));
  EXPECT_EQ(ops::conv2d(x, w, Var(), 2).shape(), (Shape{1, 2, 4, 3}));
  // Centre of an all-ones 3x3 convolution sees nine ones, the corner four.
  auto y = ops::conv2d(x, w, Var()).value();
  EXPECT_EQ(y.at(0, 0, 3, 2), 9.0);
  EXPECT_EQ(y.at(0, 1, 0, 0), 4.0);
}

TEST(OpsValues, MaxPoolOddExtentRaises) {
  Var x(Tensor({1, 1, 5, 4}, 1.0));
  try {
    ops::maxpool2x2(x);
    FAIL() << "expected EvenSizeViolation";
  } catch (const EvenSizeViolation& e) {
    EXPECT_EQ(e.extent_name(), "height");
    EXPECT_EQ(e.value(), 5u);
  }
}

TEST(OpsValues, BatchNormRunningStatistics) {
  Tensor in({2, 1, 1, 2}, std::vector<double>{1, 2, 3, 6});
  Var x(in);
  Var g(Tensor({1}, 1.0)), b(Tensor({1}, 0.0));
  ops::BatchNormState st(1);
  auto y = ops::batchnorm2d(x, g, b, st, ops::Mode::kTrain).value();
  // mean 3, biased variance (4 + 1 + 0 + 9) / 4 = 3.5
  EXPECT_NEAR(st.running_mean[0], 0.1 * 3.0, 1e-15);
  EXPECT_NEAR(st.running_var[0], 0.9 * 1.0 + 0.1 * 3.5, 1e-15);
  EXPECT_NEAR(y[0], -2.0 / std::sqrt(3.5 + 1e-5), 1e-12);
}

TEST(OpsValues, RoiAlignOfConstantMapIsConstant) {
  Var f(Tensor({1, 2, 4, 4}, 1.5));
  std::vector<ops::Region> r{{0.0, 0.0, 32.0, 16.0}};
  auto y = ops::roi_align(f, r, 7, 0.125).value();
  EXPECT_EQ(y.shape(), (Shape{1, 2, 7, 7}));
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 1.5);
}

TEST(Autograd, NoGradGuardSkipsRecording) {
  Var a(Tensor({2}, 1.0), true);
  {
    NoGradGuard g;
    auto y = ops::sum(ops::scale(a, 2.0));
    EXPECT_FALSE(y.requires_grad());
  }
  auto y = ops::sum(ops::scale(a, 2.0));
  y.backward();
  EXPECT_EQ(a.grad()[0], 2.0);
  y = ops::sum(ops::scale(a, 2.0));
  y.backward();
  EXPECT_EQ(a.grad()[0], 4.0);
}

TEST(Autograd, DiamondGraphAccumulates) {
  Var a(Tensor({1}, 3.0), true);
  auto b = ops::scale(a, 2.0);
  auto y = ops::sum(ops::add(b, ops::add(b, a)));
  y.backward();
  EXPECT_EQ(a.grad()[0], 5.0);
}

TEST(GradCheck, NonFiniteLossThrows) {
  Var a(Tensor({1}, std::numeric_limits<double>::infinity()), true);
  std::vector<Var> in{a};
  EXPECT_THROW(finite_difference_check([&] { return ops::sum(a); }, in), TrainingError);
}
