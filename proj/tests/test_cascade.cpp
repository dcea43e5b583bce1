/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include <gtest/gtest.h>

#include <json.hpp>
#include <random>
#include <set>

#include "insloc/cascade.hpp"
#include "insloc/error.hpp"

using namespace insloc;

namespace {

Image noise_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Image img(w, h, 3);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() & 0xff);
  return img;
}

SegmentationMask empty_mask(std::size_t w, std::size_t h) {
  SegmentationMask m;
  m.width = w;
  m.height = h;
  m.labels.assign(w * h, 0);
  m.probabilities.assign(w * h, 0.0);
  return m;
}

void set_rect(SegmentationMask& m, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) {
  for (std::size_t y = y0; y < y0 + h; ++y) {
    for (std::size_t x = x0; x < x0 + w; ++x) m.labels[y * m.width + x] = 1;
  }
}

// Untrained-but-marked models whose outputs are arbitrary yet deterministic.
struct RandomModels {
  Detector detector;
  UNet segmenter;

  RandomModels() : detector(detector_config(), 3), segmenter(unet_config(), 4) {
    detector.mark_trained();
    segmenter.mark_trained();
  }
  static DetectorConfig detector_config() {
    DetectorConfig c;
    c.backbone_channels = {4, 6, 8};
    c.rpn_channels = 8;
    c.head_hidden = 16;
    c.roi_output_size = 3;
    c.detect_score_threshold = 0.0;
    return c;
  }
  static UNetConfig unet_config() {
    UNetConfig c;
    c.depth = 2;
    c.base_channels = 4;
    return c;
  }
};

CascadeConfig loose_config() {
  CascadeConfig c;
  c.mask_threshold = 0.45;
  c.min_region_pixels = 1;
  return c;
}

}  // namespace

TEST(CropAndNormalize, AlignedBoxNeedsNoPadding) {
  const Image img = noise_image(64, 64, 1);
  const auto r = crop_and_normalize(img, {16, 0, 48, 32}, 0.0, 4);
  EXPECT_EQ(r.pad, PaddingRequirement{});
  EXPECT_EQ(r.crop_image, crop_image(img, 16, 0, 32, 32));
  EXPECT_EQ(r.scale, 1.0);
}

TEST(CropAndNormalize, ThirtyPixelBoxPadsToThirtyTwo) {
  const Image img = noise_image(64, 64, 2);
  const auto r = crop_and_normalize(img, {10, 12, 40, 42}, 0.0, 4);
  EXPECT_EQ(r.crop_image.width, 32u);
  EXPECT_EQ(r.crop_image.height, 32u);
  EXPECT_EQ(r.pad.left + r.pad.right, 2u);
  EXPECT_EQ(r.pad.top + r.pad.bottom, 2u);
  // Padding is black, interior is the source.
  EXPECT_EQ(r.crop_image.at(0, 0, 0), 0);
  EXPECT_EQ(r.crop_image.at(r.pad.left, r.pad.top, 1), img.at(10, 12, 1));
}

TEST(CropAndNormalize, CropOriginMapsBackThroughPadding) {
  const Image img = noise_image(64, 64, 3);
  const auto r = crop_and_normalize(img, {10, 12, 40, 42}, 0.0, 4);
  EXPECT_EQ(r.to_original(0, 0), (PixelCoord{10 - r.pad.left, 12 - r.pad.top}));
  EXPECT_TRUE(r.is_padding(0, 0));
  // Near the image corner the mapped pixel is clamped.
  const auto c = crop_and_normalize(img, {0, 0, 30, 30}, 0.0, 4);
  EXPECT_EQ(c.to_original(0, 0), (PixelCoord{0, 0}));
}

TEST(CropAndNormalize, MarginExpandsAndClips) {
  const Image img = noise_image(100, 80, 4);
  const auto r = crop_and_normalize(img, {10, 20, 50, 60}, 0.1, 4);
  EXPECT_EQ(r.source_box, (Box{6, 16, 54, 64}));
  const auto edge = crop_and_normalize(img, {1, 1, 99, 79}, 0.1, 4);
  EXPECT_EQ(edge.source_box, (Box{0, 0, 100, 80}));
}

TEST(CropAndNormalize, EmptyWindowRejected) {
  const Image img = noise_image(32, 32, 5);
  EXPECT_THROW(crop_and_normalize(img, {40, 40, 50, 50}, 0.0, 2), Error);
  EXPECT_THROW(crop_and_normalize(img, {5, 5, 5, 20}, 0.0, 2), Error);
}

TEST(CropAndNormalize, EveryInteriorPixelRoundTrips) {
  std::mt19937_64 rng(6);
  const Image img = noise_image(90, 70, 7);
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_real_distribution<double> u(0.0, 60.0);
    const double x = u(rng), y = u(rng) * 0.8;
    const Box b{x, y, x + 3 + u(rng) / 2, y + 3 + u(rng) / 3};
    const auto r = crop_and_normalize(img, b, 0.1, 3);
    std::set<PixelCoord> seen;
    for (std::size_t cy = 0; cy < r.crop_image.height; ++cy) {
      for (std::size_t cx = 0; cx < r.crop_image.width; ++cx) {
        if (r.is_padding(cx, cy)) continue;
        const PixelCoord o = r.to_original(cx, cy);
        ASSERT_TRUE(seen.insert(o).second);
        ASSERT_EQ(r.to_crop(o), (PixelCoord{cx, cy}));
        ASSERT_EQ(r.crop_image.at(cx, cy, 2), img.at(o.x, o.y, 2));
      }
    }
    EXPECT_EQ(seen.size(), std::size_t(r.source_box.area()));
  }
}

TEST(ConnectedComponents, FourConnectivity) {
  // Diagonal neighbours are separate components.
  const std::vector<std::uint8_t> cells{1, 0, 0,
                                        0, 1, 0,
                                        0, 1, 1};
  const auto comps = connected_components(cells, 3, 3);
  ASSERT_EQ(comps.size(), 2u);
  EXPECT_EQ(comps[0], (std::vector<PixelCoord>{{0, 0}}));
  EXPECT_EQ(comps[1], (std::vector<PixelCoord>{{1, 1}, {1, 2}, {2, 2}}));
}

TEST(MapMask, AllNormalGivesNoRegions) {
  const Image img = noise_image(64, 64, 8);
  const auto r = crop_and_normalize(img, {10, 12, 40, 42}, 0.0, 4);
  EXPECT_TRUE(map_mask_to_original(empty_mask(32, 32), r, 10).empty());
}

TEST(MapMask, CentredBlobMapsToBoxCentre) {
  const Image img = noise_image(128, 128, 9);
  const Box box{40, 30, 70, 60};
  const auto r = crop_and_normalize(img, box, 0.0, 4);
  auto m = empty_mask(r.crop_image.width, r.crop_image.height);
  // 8x5 = 40 px blob centred in the crop.
  set_rect(m, 12, 14, 8, 5);
  const auto regions = map_mask_to_original(m, r, 10, 2);
  ASSERT_EQ(regions.size(), 1u);
  EXPECT_EQ(regions[0].pixels.size(), 40u);
  EXPECT_EQ(regions[0].string_index, 2u);
  EXPECT_NEAR(regions[0].centroid[0], 55.0, 1.0);
  EXPECT_NEAR(regions[0].centroid[1], 45.0, 1.0);
}

TEST(MapMask, SeparatedBlobsStaySeparate) {
  const Image img = noise_image(64, 64, 10);
  const auto r = crop_and_normalize(img, {0, 0, 32, 32}, 0.0, 4);
  auto m = empty_mask(32, 32);
  set_rect(m, 4, 4, 4, 4);
  set_rect(m, 9, 4, 4, 4);
  EXPECT_EQ(map_mask_to_original(m, r, 10).size(), 2u);
  set_rect(m, 8, 4, 1, 1);
  EXPECT_EQ(map_mask_to_original(m, r, 10).size(), 1u);
}

TEST(MapMask, SmallRegionsDroppedAndPaddingIgnored) {
  const Image img = noise_image(64, 64, 11);
  const auto r = crop_and_normalize(img, {10, 12, 40, 42}, 0.0, 4);
  auto m = empty_mask(32, 32);
  set_rect(m, 5, 5, 3, 3);  // 9 px
  for (std::size_t x = 0; x < 32; ++x) m.labels[x] = 1;  // padding row
  EXPECT_TRUE(map_mask_to_original(m, r, 10).empty());
  EXPECT_EQ(map_mask_to_original(m, r, 9).size(), 1u);
}

TEST(MapMask, ExtentMismatchRejected) {
  const Image img = noise_image(64, 64, 12);
  const auto r = crop_and_normalize(img, {10, 12, 40, 42}, 0.0, 4);
  EXPECT_THROW(map_mask_to_original(empty_mask(30, 30), r, 10), ShapeError);
}

TEST(Locate, RegionsLieInTheirCropWindowAndRoundTrip) {
  RandomModels models;
  const auto cfg = loose_config();
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Image img = noise_image(64, 64, 20 + seed);
    const auto report = locate(img, models.detector, models.segmenter, cfg);
    ASSERT_EQ(report.crop_windows.size(), report.string_boxes.size());
    for (const auto& region : report.breaks) {
      ASSERT_LT(region.string_index, report.string_boxes.size());
      const auto crop = crop_and_normalize(img, report.string_boxes[region.string_index].box,
                                           cfg.margin_fraction, models.segmenter.config().depth);
      EXPECT_EQ(crop.source_box, report.crop_windows[region.string_index]);
      for (const auto& p : region.pixels) {
        const auto c = crop.to_crop(p);
        ASSERT_FALSE(crop.is_padding(c.x, c.y));
        ASSERT_EQ(crop.to_original(c.x, c.y), p);
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 0u);
}

TEST(Locate, Deterministic) {
  RandomModels models;
  const Image img = noise_image(64, 64, 30);
  const auto a = locate(img, models.detector, models.segmenter, loose_config());
  const auto b = locate(img, models.detector, models.segmenter, loose_config());
  EXPECT_EQ(a.string_boxes, b.string_boxes);
  EXPECT_EQ(a.breaks, b.breaks);
  EXPECT_EQ(report_to_json(a, false), report_to_json(b, false));
}

TEST(Locate, TimingsNonNegativeAndSumToTotal) {
  RandomModels models;
  const Image img = noise_image(64, 64, 31);
  const auto r = locate(img, models.detector, models.segmenter, loose_config());
  const auto& t = r.timing;
  for (double v : {t.detect_ms, t.crop_ms, t.segment_ms, t.map_ms}) EXPECT_GE(v, 0.0);
  const double sum = t.detect_ms + t.crop_ms + t.segment_ms + t.map_ms;
  EXPECT_LE(sum, t.total_ms);
  EXPECT_GE(sum, 0.9 * t.total_ms);
}

TEST(Locate, NoDetectionsGiveNoBreaks) {
  RandomModels models;
  models.detector.mutable_config().detect_score_threshold = 1.0;
  const auto r = locate(noise_image(64, 64, 32), models.detector, models.segmenter, loose_config());
  EXPECT_TRUE(r.string_boxes.empty());
  EXPECT_TRUE(r.breaks.empty());
}

TEST(Locate, OverlappingCropsDoNotDuplicateRegions) {
  RandomModels models;
  const auto r = locate(noise_image(64, 64, 33), models.detector, models.segmenter, loose_config());
  std::set<PixelCoord> seen;
  for (const auto& region : r.breaks) {
    for (const auto& p : region.pixels) EXPECT_TRUE(seen.insert(p).second);
  }
}

TEST(LocatorReport, JsonFields) {
  LocatorReport r;
  r.string_boxes.push_back({{1, 2, 30, 40}, 0.9, "insulator"});
  r.crop_windows.push_back({0, 0, 33, 44});
  r.breaks.push_back(make_region({{5, 6}, {6, 6}}, 0));
  r.timing = {1, 2, 3, 4, 10.5};
  const auto j = nlohmann::json::parse(report_to_json(r));
  EXPECT_EQ(j["string_boxes"][0]["class"], "insulator");
  EXPECT_EQ(j["breaks"][0]["pixel_count"], 2);
  EXPECT_EQ(j["breaks"][0]["bbox"], nlohmann::json::array({5.0, 6.0, 7.0, 7.0}));
  EXPECT_DOUBLE_EQ(j["breaks"][0]["centroid"][0].get<double>(), 5.5);
  EXPECT_DOUBLE_EQ(j["timing_ms"]["total"].get<double>(), 10.5);
  EXPECT_FALSE(nlohmann::json::parse(report_to_json(r, false)).contains("timing_ms"));
}

TEST(Overlay, OutlinesBoxesAndTintsBreaks) {
  const Image img(20, 20, 1, 100);
  LocatorReport r;
  r.string_boxes.push_back({{2, 2, 10, 10}, 0.9, "insulator"});
  r.breaks.push_back(make_region({{5, 5}}, 0));
  const Image out = render_overlay(img, r);
  EXPECT_EQ(out.channels, 3u);
  EXPECT_EQ(out.at(2, 5, 1), 255);
  EXPECT_EQ(out.at(5, 5, 0), 255);
  EXPECT_EQ(out.at(5, 5, 1), 50);
  EXPECT_EQ(out.at(15, 15, 0), 100);
}

TEST(Ablation, ModeNames) {
  for (auto m : {AblationMode::kUnetOnly, AblationMode::kDetectorOnly, AblationMode::kCascade}) {
    EXPECT_EQ(parse_ablation_mode(ablation_mode_name(m)), m);
  }
  EXPECT_THROW(parse_ablation_mode("both"), ConfigError);
}

TEST(Ablation, MissingModelsRejected) {
  const Image img = noise_image(32, 32, 40);
  AblationModels none;
  for (auto m : {AblationMode::kUnetOnly, AblationMode::kDetectorOnly, AblationMode::kCascade}) {
    EXPECT_THROW(locate_breaks(img, none, m, CascadeConfig{}), ConfigError);
  }
}

TEST(Ablation, UnetOnlySegmentsWholeImage) {
  RandomModels models;
  AblationModels am;
  am.full_segmenter = &models.segmenter;
  const Image img = noise_image(32, 32, 41);
  const auto regions = locate_breaks(img, am, AblationMode::kUnetOnly, loose_config());
  const auto mask = predict_mask(models.segmenter, img, loose_config().mask_threshold);
  std::size_t broken = 0;
  for (auto v : mask.labels) broken += v;
  std::size_t covered = 0;
  for (const auto& r : regions) covered += r.pixels.size();
  EXPECT_EQ(covered, broken);
}

TEST(Ablation, DetectorOnlyKeepsBreakClass) {
  auto cfg = RandomModels::detector_config();
  cfg.classes = {"insulator", "broken_disc"};
  Detector det(cfg, 5);
  det.mark_trained();
  AblationModels am;
  am.break_detector = &det;
  const Image img = noise_image(64, 64, 42);
  const auto regions = locate_breaks(img, am, AblationMode::kDetectorOnly, CascadeConfig{});
  std::size_t breaks = 0;
  for (const auto& d : det.detect(img)) breaks += d.scored_box.class_label == "broken_disc";
  EXPECT_EQ(regions.size(), breaks);
}
