/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "insloc/error.hpp"
#include "insloc/gradcheck.hpp"
#include "insloc/unet.hpp"

using namespace insloc;

namespace {

Tensor random_input(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-0.5, 0.5);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = d(rng);
  return t;
}

Image random_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Image img(w, h, 3);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() & 0xff);
  return img;
}

UNetConfig small_config(std::size_t depth = 2) {
  UNetConfig c;
  c.depth = depth;
  c.base_channels = 4;
  return c;
}

}  // namespace

TEST(ValidateInputSize, Examples) {
  EXPECT_TRUE(validate_input_size(64, 64, 4).ok);
  EXPECT_TRUE(validate_input_size(16, 48, 4).ok);
  const auto p = validate_input_size(63, 63, 4);
  EXPECT_FALSE(p.ok);
  EXPECT_EQ(p.padded(63, true), 64u);
  EXPECT_EQ(p.padded(63, false), 64u);
  EXPECT_EQ(p.top, 0u);
  EXPECT_EQ(p.bottom, 1u);
  const auto q = validate_input_size(30, 50, 4);
  EXPECT_EQ(q.top, 1u);
  EXPECT_EQ(q.bottom, 1u);
  EXPECT_EQ(q.left, 7u);
  EXPECT_EQ(q.right, 7u);
}

TEST(UNetForward, OutputExtentsMatchInput) {
  UNet net(UNetConfig{}, 1);
  NoGradGuard g;
  EXPECT_EQ(net.forward(Var(random_input({1, 3, 64, 64}, 1)), ops::Mode::kInfer).shape(),
            (Shape{1, 2, 64, 64}));
}

TEST(UNetForward, PaperSizedInputAtDepthTwo) {
  UNetConfig c = small_config(2);
  c.base_channels = 2;
  UNet net(c, 1);
  NoGradGuard g;
  EXPECT_EQ(net.forward(Var(random_input({1, 3, 572, 572}, 2)), ops::Mode::kInfer).shape(),
            (Shape{1, 2, 572, 572}));
}

TEST(UNetForward, RandomValidSizes) {
  std::mt19937_64 rng(3);
  for (std::size_t depth : {1u, 2u, 3u}) {
    UNet net(small_config(depth), depth);
    std::uniform_int_distribution<std::size_t> k(1, 5);
    for (int i = 0; i < 4; ++i) {
      const std::size_t h = k(rng) << depth, w = k(rng) << depth;
      NoGradGuard g;
      EXPECT_EQ(net.forward(Var(random_input({1, 3, h, w}, i)), ops::Mode::kInfer).shape(),
                (Shape{1, 2, h, w}));
    }
  }
}

TEST(UNetForward, IndivisibleSizeRaisesEvenSizeViolation) {
  UNet net(small_config(2), 1);
  NoGradGuard g;
  EXPECT_THROW(net.forward(Var(random_input({1, 3, 6, 8}, 1)), ops::Mode::kInfer),
               EvenSizeViolation);
  EXPECT_THROW(net.forward(Var(random_input({1, 3, 9, 8}, 1)), ops::Mode::kInfer),
               EvenSizeViolation);
}

TEST(SkipFuse, ConcatenationIdentity) {
  Var enc(random_input({1, 16, 32, 32}, 1));
  Var dec(Tensor({1, 16, 32, 32}, 0.0));
  const Var f = skip_fuse(enc, dec);
  EXPECT_EQ(f.shape(), (Shape{1, 32, 32, 32}));
  EXPECT_EQ(ops::slice_channels(f, 0, 16).value(), enc.value());
  for (double v : ops::slice_channels(f, 16, 16).value().data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(skip_fuse(enc, Var(Tensor({1, 16, 16, 32}))), ShapeError);
}

TEST(PredictMask, ZeroWeightsGiveHalfEverywhere) {
  UNet net(UNetConfig{}, 0, Init::kZeros);
  const auto m = predict_mask(net, random_image(40, 24, 1));
  EXPECT_EQ(m.width, 40u);
  EXPECT_EQ(m.height, 24u);
  for (std::size_t i = 0; i < m.labels.size(); ++i) {
    EXPECT_EQ(m.probabilities[i], 0.5);
    EXPECT_EQ(m.labels[i], 1);
  }
}

TEST(PredictMask, ProbabilitiesMatchTwoWaySoftmax) {
  UNet net(small_config(2), 5);
  const Image img = random_image(16, 12, 2);
  const auto m = predict_mask(net, img);
  NoGradGuard g;
  const Tensor logits = net.forward(Var(image_to_tensor(img)), ops::Mode::kInfer).value();
  for (std::size_t y = 0; y < 12; ++y) {
    for (std::size_t x = 0; x < 16; ++x) {
      const double a = logits.at(0, 0, y, x), b = logits.at(0, 1, y, x);
      const double mx = std::max(a, b);
      const double p0 = std::exp(a - mx) / (std::exp(a - mx) + std::exp(b - mx));
      const double p1 = m.probabilities[y * 16 + x];
      EXPECT_NEAR(p0 + p1, 1.0, 1e-12);
      EXPECT_EQ(m.labels[y * 16 + x], p1 >= 0.5);
    }
  }
}

TEST(UNetGrad, FullNetworkAt16x16) {
  UNet net(UNetConfig{}, 7);
  Var x(random_input({2, 3, 16, 16}, 8), true);
  std::vector<std::uint8_t> labels(2 * 16 * 16);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = (i / 7) % 3 == 0;
  std::vector<Var> inputs{x};
  for (auto& p : net.parameters().items()) inputs.push_back(p.value);
  GradCheckOptions opt;
  opt.step = 1e-6;
  opt.max_coords_per_input = 3;
  opt.seed = 1;
  const auto r = finite_difference_check(
      [&] { return ops::softmax_cross_entropy_2d(net.forward(x, ops::Mode::kTrain), labels); },
      inputs, opt);
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(UNetState, RoundTripThroughCheckpointBytes) {
  UNet net(small_config(2), 9);
  net.mark_trained();
  const auto bytes = encode_checkpoint(net.state());
  auto back = UNet::from_state(decode_checkpoint(bytes));
  EXPECT_TRUE(back->trained());
  EXPECT_EQ(back->config(), net.config());
  EXPECT_EQ(encode_checkpoint(back->state()), bytes);
}

namespace {

std::vector<SegSample> toy_samples() {
  std::vector<SegSample> s;
  for (int i = 0; i < 4; ++i) {
    SegSample x{Image(16, 16, 3, 40), Image(16, 16, 1, 0)};
    for (std::size_t y = 4 + i; y < 9 + i; ++y) {
      for (std::size_t c = 3; c < 8; ++c) {
        x.image.at(c, y, 0) = 230;
        x.labels.at(c, y) = 255;
      }
    }
    s.push_back(std::move(x));
  }
  return s;
}

}  // namespace

TEST(TrainSegmenter, ZeroLearningRateKeepsWeights) {
  UNet net(small_config(2), 3);
  const auto before = net.parameters().items()[0].value.value();
  SegTrainConfig cfg;
  cfg.steps = 3;
  cfg.optimizer.learning_rate = 0.0;
  train_segmenter(net, toy_samples(), cfg);
  for (const auto& p : net.parameters().items()) EXPECT_TRUE(p.value.value().all_finite());
  EXPECT_EQ(net.parameters().items()[0].value.value(), before);
}

TEST(TrainSegmenter, DeterministicAndLearnsToyTask) {
  SegTrainConfig cfg;
  cfg.steps = 300;
  cfg.seed = 4;
  UNet a(small_config(2), 3), b(small_config(2), 3);
  const auto ca = train_segmenter(a, toy_samples(), cfg);
  const auto cb = train_segmenter(b, toy_samples(), cfg);
  EXPECT_EQ(ca.to_csv(), cb.to_csv());
  EXPECT_LT(ca.tail_mean(20), 0.3 * ca.head_mean(5));
  EXPECT_TRUE(a.trained());
}

TEST(TrainSegmenter, WindowedTraining) {
  SegTrainConfig cfg;
  cfg.steps = 6;
  cfg.window = 8;
  UNet a(small_config(2), 3), b(small_config(2), 3);
  const auto ca = train_segmenter(a, toy_samples(), cfg);
  EXPECT_EQ(ca.to_csv(), train_segmenter(b, toy_samples(), cfg).to_csv());
  // A window wider than the samples leaves them whole.
  cfg.window = 64;
  UNet c(small_config(2), 3);
  EXPECT_EQ(train_segmenter(c, toy_samples(), cfg).points.size(), 6u);
}

TEST(TrainSegmenter, EmptySetRejected) {
  UNet net(small_config(1), 0);
  EXPECT_THROW(train_segmenter(net, {}, SegTrainConfig{}), TrainingError);
}

TEST(LossCurveCsv, RoundTrip) {
  LossCurve c;
  c.points = {{0, 0.6931471805599453}, {1, 1e-300}, {2, 12.5}};
  const auto text = c.to_csv();
  EXPECT_EQ(LossCurve::from_csv(text).to_csv(), text);
  EXPECT_EQ(LossCurve::from_csv(text).points, c.points);
  EXPECT_THROW(LossCurve::from_csv("a,b\n"), FormatError);
}
