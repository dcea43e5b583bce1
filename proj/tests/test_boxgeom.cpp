/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "insloc/boxgeom.hpp"
#include "insloc/error.hpp"
#include "oracles.hpp"

using namespace insloc;

TEST(Iou, Examples) {
  const Box b{1, 2, 11, 7};
  EXPECT_EQ(iou(b, b), 1.0);
  EXPECT_EQ(iou({0, 0, 10, 10}, {20, 20, 30, 30}), 0.0);
  EXPECT_EQ(iou({0, 0, 10, 10}, {10, 0, 20, 10}), 0.0);
  EXPECT_NEAR(iou({0, 0, 10, 10}, {5, 5, 15, 15}), 25.0 / 175.0, 1e-15);
}

TEST(Iou, MatchesGridCountingOracle) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> c(0, 30), s(1, 20);
  for (int i = 0; i < 2000; ++i) {
    const int ax = c(rng), ay = c(rng), bx = c(rng), by = c(rng);
    const Box a{double(ax), double(ay), double(ax + s(rng)), double(ay + s(rng))};
    const Box b{double(bx), double(by), double(bx + s(rng)), double(by + s(rng))};
    EXPECT_NEAR(iou(a, b), oracle::grid_iou(a, b), 1e-12);
  }
}

TEST(Iou, SymmetricBoundedAndOneOnlyForIdentity) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> c(0, 100), s(0.5, 50);
  for (int i = 0; i < 10000; ++i) {
    const double ax = c(rng), ay = c(rng), bx = c(rng), by = c(rng);
    const Box a{ax, ay, ax + s(rng), ay + s(rng)};
    const Box b{bx, by, bx + s(rng), by + s(rng)};
    const double o = iou(a, b);
    EXPECT_EQ(o, iou(b, a));
    EXPECT_GE(o, 0.0);
    EXPECT_LE(o, 1.0);
    if (a != b) EXPECT_LT(o, 1.0);
  }
}

TEST(Nms, Examples) {
  std::vector<ScoredBox> one{{{0, 0, 10, 10}, 0.4, "string"}};
  EXPECT_EQ(nms(one, 0.0, 0.7), one);
  EXPECT_TRUE(nms({}, 0.0, 0.7).empty());

  // IoU of A and B is 80/100 = 0.8
  ScoredBox a{{0, 0, 10, 10}, 0.9, "string"};
  ScoredBox b{{0, 0, 10, 8}, 0.8, "string"};
  ASSERT_NEAR(iou(a.box, b.box), 0.8, 1e-15);
  std::vector<ScoredBox> pair{b, a};
  EXPECT_EQ(nms(pair, 0.0, 0.7), std::vector<ScoredBox>{a});

  ScoredBox d{{50, 50, 60, 60}, 0.95, "string"};
  std::vector<ScoredBox> disjoint{a, d};
  EXPECT_EQ(nms(disjoint, 0.0, 0.7), (std::vector<ScoredBox>{d, a}));
}

TEST(Nms, ScoreThresholdAndTies) {
  ScoredBox a{{0, 0, 10, 10}, 0.5, "first"};
  ScoredBox b{{0, 0, 10, 10}, 0.5, "second"};
  ScoredBox low{{40, 40, 50, 50}, 0.1, "low"};
  std::vector<ScoredBox> c{a, b, low};
  auto kept = nms(c, 0.2, 0.7);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].class_label, "first");
  // Suppression requires IoU strictly above the threshold.
  EXPECT_EQ(nms(c, 0.0, 1.0).size(), 3u);
}

TEST(Nms, MatchesBruteForceOracle) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> size(0, 60);
  for (int trial = 0; trial < 200; ++trial) {
    auto c = oracle::random_nms_instance(rng, size(rng));
    const double thr = (trial % 5) * 0.2;
    EXPECT_EQ(nms_indices(c, 0.3, thr), oracle::brute_force_nms(c, 0.3, thr));
  }
}

TEST(Nms, KeptSetHasNoDominatedOverlap) {
  std::mt19937_64 rng(5);
  auto c = oracle::random_nms_instance(rng, 150);
  auto kept = nms(c, 0.0, 0.5);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    for (std::size_t j = i + 1; j < kept.size(); ++j) {
      EXPECT_LE(iou(kept[i].box, kept[j].box), 0.5);
      EXPECT_GE(kept[i].score, kept[j].score);
    }
  }
}

TEST(Anchors, CountsAndGeometry) {
  AnchorConfig cfg;
  cfg.sizes = {16, 32, 64};
  cfg.ratios = {0.5, 1.0, 2.0};
  cfg.stride = 8;
  EXPECT_EQ(generate_anchors(cfg, 1, 1).size(), 9u);
  EXPECT_EQ(generate_anchors(cfg, 4, 5).size(), 180u);
  auto a = generate_anchors(cfg, 2, 3);
  // Cell (y=1, x=2), size 32, ratio 1.
  const Box& m = a[(1 * 3 + 2) * 9 + 1 * 3 + 1];
  EXPECT_DOUBLE_EQ(m.width(), 32.0);
  EXPECT_DOUBLE_EQ(m.height(), 32.0);
  EXPECT_DOUBLE_EQ(m.area(), 1024.0);
  EXPECT_DOUBLE_EQ(m.center_x(), 20.0);
  EXPECT_DOUBLE_EQ(m.center_y(), 12.0);
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t r = 0; r < 3; ++r) {
      const Box& b = a[s * 3 + r];
      EXPECT_NEAR(b.area(), cfg.sizes[s] * cfg.sizes[s], 1e-9);
      EXPECT_NEAR(b.height() / b.width(), cfg.ratios[r], 1e-12);
    }
  }
  EXPECT_THROW(generate_anchors(cfg, 0, 3), ShapeError);
}

TEST(BoxDelta, Examples) {
  const Box anchor{0, 0, 10, 10};
  auto z = encode_box(anchor, anchor);
  EXPECT_EQ(z.tx, 0.0);
  EXPECT_EQ(z.ty, 0.0);
  EXPECT_EQ(z.tw, 0.0);
  EXPECT_EQ(z.th, 0.0);
  auto d = encode_box({5, 5, 15, 15}, anchor);
  EXPECT_DOUBLE_EQ(d.tx, 0.5);
  EXPECT_DOUBLE_EQ(d.ty, 0.5);
  EXPECT_DOUBLE_EQ(d.tw, 0.0);
  EXPECT_DOUBLE_EQ(d.th, 0.0);
}

TEST(BoxDelta, DecodeClampsScale) {
  const Box anchor{0, 0, 10, 10};
  const Box b = decode_box({0, 0, 50.0, -50.0}, anchor);
  EXPECT_NEAR(b.width(), 10.0 * std::exp(4.0), 1e-9);
  EXPECT_NEAR(b.height(), 10.0 * std::exp(-4.0), 1e-12);
}

// Side lengths in [1, 1000] with scale ratios inside the decode clamp
// (|tw|, |th| <= 4); pairs beyond it are decoded at the clamp by design.
TEST(BoxDelta, RoundTrip) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> pos(-500, 500), side(1, 1000);
  int checked = 0;
  while (checked < 20000) {
    double x = pos(rng), y = pos(rng);
    const Box a{x, y, x + side(rng), y + side(rng)};
    x = pos(rng);
    y = pos(rng);
    const Box t{x, y, x + side(rng), y + side(rng)};
    const auto d = encode_box(t, a);
    if (std::abs(d.tw) > kDeltaClamp || std::abs(d.th) > kDeltaClamp) continue;
    ++checked;
    const Box r = decode_box(encode_box(t, a), a);
    EXPECT_NEAR(r.x_min, t.x_min, 1e-9);
    EXPECT_NEAR(r.y_min, t.y_min, 1e-9);
    EXPECT_NEAR(r.x_max, t.x_max, 1e-9);
    EXPECT_NEAR(r.y_max, t.y_max, 1e-9);
  }
}

TEST(Clip, Examples) {
  EXPECT_EQ(clip_to_image({10, 10, 20, 30}, 100, 100), (Box{10, 10, 20, 30}));
  EXPECT_EQ(clip_to_image({-5, -5, 5, 5}, 100, 100), (Box{0, 0, 5, 5}));
  EXPECT_FALSE(clip_to_image({120, 10, 130, 20}, 100, 100).has_value());
  EXPECT_FALSE(clip_to_image({-10, 10, 0, 20}, 100, 100).has_value());
}

TEST(Match, Examples) {
  std::vector<Box> truths{{0, 0, 10, 10}, {20, 20, 40, 40}, {50, 0, 60, 30}};
  std::vector<ScoredBox> exact;
  for (const auto& t : truths) exact.push_back({t, 0.9, "string"});
  EXPECT_EQ(match_detections(exact, truths, 0.95), (EvalCounts{3, 0, 0}));
  EXPECT_EQ(match_detections({}, truths, 0.95), (EvalCounts{0, 0, 3}));

  std::vector<Box> one{{0, 0, 10, 10}};
  std::vector<ScoredBox> near{{{0, 0, 10, 9}, 0.9, "string"}};
  ASSERT_NEAR(iou(near[0].box, one[0]), 0.9, 1e-15);
  EXPECT_EQ(match_detections(near, one, 0.95), (EvalCounts{0, 1, 1}));
}

TEST(Match, EachTruthMatchedOnce) {
  std::vector<Box> truths{{0, 0, 10, 10}};
  std::vector<ScoredBox> dets{{{0, 0, 10, 10}, 0.5, "string"}, {{0, 0, 10, 10}, 0.9, "string"}};
  EXPECT_EQ(match_detections(dets, truths, 0.5), (EvalCounts{1, 1, 0}));
}

TEST(Match, ConservesCounts) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> n(0, 40);
  for (int trial = 0; trial < 500; ++trial) {
    auto dets = oracle::random_nms_instance(rng, n(rng));
    auto t = oracle::random_nms_instance(rng, n(rng));
    std::vector<Box> truths;
    for (auto& s : t) truths.push_back(s.box);
    const auto c = match_detections(dets, truths, 0.3);
    EXPECT_EQ(c.tp + c.fn, truths.size());
    EXPECT_EQ(c.tp + c.fp, dets.size());
  }
}
