/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include "insloc/cascade.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <json.hpp>

#include "insloc/error.hpp"

namespace insloc {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::vector<BreakRegion> regions_from_grid(std::span<const std::uint8_t> cells, std::size_t width,
                                           std::size_t height, std::size_t min_pixels) {
  std::vector<BreakRegion> out;
  for (auto& comp : connected_components(cells, width, height)) {
    if (comp.size() >= min_pixels) out.push_back(make_region(std::move(comp), 0));
  }
  return out;
}

}  // namespace

void CascadeConfig::validate() const {
  if (!(margin_fraction >= 0.0 && std::isfinite(margin_fraction))) {
    throw ConfigError("margin_fraction must be finite and non-negative");
  }
  if (!(mask_threshold > 0.0 && mask_threshold < 1.0)) {
    throw ConfigError("mask_threshold must be in (0, 1)");
  }
}

bool CropRecord::is_padding(std::size_t cx, std::size_t cy) const noexcept {
  const auto w = static_cast<std::size_t>(source_box.width());
  const auto h = static_cast<std::size_t>(source_box.height());
  return cx < pad.left || cy < pad.top || cx - pad.left >= w || cy - pad.top >= h;
}

PixelCoord CropRecord::to_original(std::size_t cx, std::size_t cy) const noexcept {
  auto map = [](std::size_t origin, std::size_t c, std::size_t pad, std::size_t extent) {
    const long v = long(origin) + long(c) - long(pad);
    return std::size_t(std::clamp(v, 0L, long(extent) - 1));
  };
  return {map(x0(), cx, pad.left, image_width), map(y0(), cy, pad.top, image_height)};
}

PixelCoord CropRecord::to_crop(PixelCoord p) const {
  if (p.x < x0() || p.y < y0() || double(p.x) >= source_box.x_max ||
      double(p.y) >= source_box.y_max) {
    throw Error("to_crop: pixel outside the crop window");
  }
  return {p.x - x0() + pad.left, p.y - y0() + pad.top};
}

CropRecord crop_and_normalize(const Image& image, const Box& detection, double margin_fraction,
                              std::size_t depth) {
  if (!(margin_fraction >= 0.0)) throw ConfigError("margin_fraction must be non-negative");
  const double mx = margin_fraction * detection.width();
  const double my = margin_fraction * detection.height();
  const double x0 = std::clamp(std::floor(detection.x_min - mx), 0.0, double(image.width));
  const double y0 = std::clamp(std::floor(detection.y_min - my), 0.0, double(image.height));
  const double x1 = std::clamp(std::ceil(detection.x_max + mx), 0.0, double(image.width));
  const double y1 = std::clamp(std::ceil(detection.y_max + my), 0.0, double(image.height));
  if (!(x1 > x0 && y1 > y0)) throw Error("crop_and_normalize: crop window is empty");

  CropRecord r;
  r.source_box = {x0, y0, x1, y1};
  r.image_width = image.width;
  r.image_height = image.height;
  const auto w = static_cast<std::size_t>(x1 - x0), h = static_cast<std::size_t>(y1 - y0);
  r.pad = validate_input_size(h, w, depth);
  r.crop_image = Image(w + r.pad.left + r.pad.right, h + r.pad.top + r.pad.bottom, image.channels, 0);
  const std::size_t row = w * image.channels;
  for (std::size_t y = 0; y < h; ++y) {
    const auto* src = &image.pixels[((r.y0() + y) * image.width + r.x0()) * image.channels];
    auto* dst = &r.crop_image.pixels[((y + r.pad.top) * r.crop_image.width + r.pad.left) *
                                     image.channels];
    std::copy(src, src + row, dst);
  }
  return r;
}

BreakRegion make_region(std::vector<PixelCoord> pixels, std::size_t string_index) {
  if (pixels.empty()) throw Error("make_region: no pixels");
  std::sort(pixels.begin(), pixels.end(),
            [](const PixelCoord& a, const PixelCoord& b) { return std::pair(a.y, a.x) < std::pair(b.y, b.x); });
  BreakRegion r;
  std::size_t x_lo = pixels[0].x, x_hi = pixels[0].x, y_lo = pixels[0].y, y_hi = pixels[0].y;
  double sx = 0.0, sy = 0.0;
  for (const auto& p : pixels) {
    x_lo = std::min(x_lo, p.x);
    x_hi = std::max(x_hi, p.x);
    y_lo = std::min(y_lo, p.y);
    y_hi = std::max(y_hi, p.y);
    sx += double(p.x);
    sy += double(p.y);
  }
  r.bbox = {double(x_lo), double(y_lo), double(x_hi + 1), double(y_hi + 1)};
  r.centroid = {sx / double(pixels.size()), sy / double(pixels.size())};
  r.string_index = string_index;
  r.pixels = std::move(pixels);
  return r;
}

std::vector<std::vector<PixelCoord>> connected_components(std::span<const std::uint8_t> cells,
                                                          std::size_t width, std::size_t height) {
  if (cells.size() != width * height) throw ShapeError("connected_components: grid size mismatch");
  std::vector<std::uint8_t> seen(cells.size(), 0);
  std::vector<std::vector<PixelCoord>> out;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < cells.size(); ++start) {
    if (!cells[start] || seen[start]) continue;
    std::vector<PixelCoord> comp;
    seen[start] = 1;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      const std::size_t x = i % width, y = i / width;
      comp.push_back({x, y});
      auto visit = [&](std::size_t j) {
        if (cells[j] && !seen[j]) {
          seen[j] = 1;
          stack.push_back(j);
        }
      };
      if (x > 0) visit(i - 1);
      if (x + 1 < width) visit(i + 1);
      if (y > 0) visit(i - width);
      if (y + 1 < height) visit(i + width);
    }
    std::sort(comp.begin(), comp.end(),
              [](const PixelCoord& a, const PixelCoord& b) { return std::pair(a.y, a.x) < std::pair(b.y, b.x); });
    out.push_back(std::move(comp));
  }
  return out;
}

std::vector<BreakRegion> map_mask_to_original(const SegmentationMask& mask,
                                              const CropRecord& record,
                                              std::size_t min_region_pixels,
                                              std::size_t string_index) {
  if (mask.width != record.crop_image.width || mask.height != record.crop_image.height ||
      mask.labels.size() != mask.width * mask.height) {
    throw ShapeError("map_mask_to_original: mask is " + std::to_string(mask.width) + "x" +
                     std::to_string(mask.height) + ", crop is " +
                     std::to_string(record.crop_image.width) + "x" +
                     std::to_string(record.crop_image.height));
  }
  const auto w = static_cast<std::size_t>(record.source_box.width());
  const auto h = static_cast<std::size_t>(record.source_box.height());
  std::vector<std::uint8_t> cells(w * h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      cells[y * w + x] = mask.labels[(y + record.pad.top) * mask.width + x + record.pad.left];
    }
  }
  auto regions = regions_from_grid(cells, w, h, min_region_pixels);
  for (auto& r : regions) {
    for (auto& p : r.pixels) {
      p.x += record.x0();
      p.y += record.y0();
    }
    r = make_region(std::move(r.pixels), string_index);
  }
  return regions;
}

LocatorReport locate_in_boxes(const Image& image, std::span<const ScoredBox> boxes,
                              UNet& segmenter, const CascadeConfig& config) {
  config.validate();
  LocatorReport report;
  report.string_boxes.assign(boxes.begin(), boxes.end());
  const auto t_start = Clock::now();

  auto t = Clock::now();
  std::vector<CropRecord> crops;
  for (const auto& sb : report.string_boxes) {
    crops.push_back(crop_and_normalize(image, sb.box, config.margin_fraction,
                                       segmenter.config().depth));
    report.crop_windows.push_back(crops.back().source_box);
  }
  report.timing.crop_ms = ms_since(t);

  t = Clock::now();
  std::vector<SegmentationMask> masks;
  for (const auto& c : crops) masks.push_back(predict_mask(segmenter, c.crop_image, config.mask_threshold));
  report.timing.segment_ms = ms_since(t);

  t = Clock::now();
  std::vector<std::uint8_t> taken(image.width * image.height, 0);
  for (std::size_t i = 0; i < crops.size(); ++i) {
    for (auto& r : map_mask_to_original(masks[i], crops[i], config.min_region_pixels, i)) {
      const bool seen = std::any_of(r.pixels.begin(), r.pixels.end(), [&](const PixelCoord& p) {
        return taken[p.y * image.width + p.x] != 0;
      });
      if (seen) continue;
      for (const auto& p : r.pixels) taken[p.y * image.width + p.x] = 1;
      report.breaks.push_back(std::move(r));
    }
  }
  report.timing.map_ms = ms_since(t);
  report.timing.total_ms = ms_since(t_start);
  return report;
}

LocatorReport locate(const Image& image, const Detector& detector, UNet& segmenter,
                     const CascadeConfig& config) {
  config.validate();
  const auto t_start = Clock::now();
  std::vector<ScoredBox> boxes;
  for (const auto& d : detector.detect(image)) boxes.push_back(d.scored_box);
  const double detect_ms = ms_since(t_start);
  LocatorReport report = locate_in_boxes(image, boxes, segmenter, config);
  report.timing.detect_ms = detect_ms;
  report.timing.total_ms = ms_since(t_start);
  return report;
}

std::string report_to_json(const LocatorReport& report, bool with_timing) {
  nlohmann::ordered_json j;
  auto box_json = [](const Box& b) { return nlohmann::ordered_json::array({b.x_min, b.y_min, b.x_max, b.y_max}); };
  j["string_boxes"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < report.string_boxes.size(); ++i) {
    const auto& sb = report.string_boxes[i];
    nlohmann::ordered_json e;
    e["box"] = box_json(sb.box);
    e["score"] = sb.score;
    e["class"] = sb.class_label;
    if (i < report.crop_windows.size()) e["crop_window"] = box_json(report.crop_windows[i]);
    j["string_boxes"].push_back(e);
  }
  j["breaks"] = nlohmann::ordered_json::array();
  for (const auto& r : report.breaks) {
    nlohmann::ordered_json e;
    e["string_index"] = r.string_index;
    e["bbox"] = box_json(r.bbox);
    e["pixel_count"] = r.pixels.size();
    e["centroid"] = {r.centroid[0], r.centroid[1]};
    j["breaks"].push_back(e);
  }
  if (with_timing) {
    j["timing_ms"] = {{"detect", report.timing.detect_ms},
                      {"crop", report.timing.crop_ms},
                      {"segment", report.timing.segment_ms},
                      {"map", report.timing.map_ms},
                      {"total", report.timing.total_ms}};
  }
  return j.dump(2) + "\n";
}

Image render_overlay(const Image& image, const LocatorReport& report) {
  Image out(image.width, image.height, 3);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        out.at(x, y, c) = image.at(x, y, image.channels == 3 ? c : 0);
      }
    }
  }
  auto paint = [&](long x, long y, std::array<std::uint8_t, 3> rgb) {
    if (x < 0 || y < 0 || x >= long(out.width) || y >= long(out.height)) return;
    for (std::size_t c = 0; c < 3; ++c) out.at(std::size_t(x), std::size_t(y), c) = rgb[c];
  };
  for (const auto& sb : report.string_boxes) {
    const long x0 = std::lround(sb.box.x_min), y0 = std::lround(sb.box.y_min);
    const long x1 = std::lround(sb.box.x_max) - 1, y1 = std::lround(sb.box.y_max) - 1;
    for (long x = x0; x <= x1; ++x) {
      paint(x, y0, {0, 255, 0});
      paint(x, y1, {0, 255, 0});
    }
    for (long y = y0; y <= y1; ++y) {
      paint(x0, y, {0, 255, 0});
      paint(x1, y, {0, 255, 0});
    }
  }
  for (const auto& r : report.breaks) {
    for (const auto& p : r.pixels) {
      out.at(p.x, p.y, 0) = 255;
      out.at(p.x, p.y, 1) = static_cast<std::uint8_t>(out.at(p.x, p.y, 1) / 2);
      out.at(p.x, p.y, 2) = static_cast<std::uint8_t>(out.at(p.x, p.y, 2) / 2);
    }
  }
  return out;
}

AblationMode parse_ablation_mode(std::string_view name) {
  if (name == "unet_only") return AblationMode::kUnetOnly;
  if (name == "detector_only") return AblationMode::kDetectorOnly;
  if (name == "cascade") return AblationMode::kCascade;
  throw ConfigError("unknown ablation mode '" + std::string(name) +
                    "' (expected unet_only, detector_only or cascade)");
}

std::string_view ablation_mode_name(AblationMode mode) {
  switch (mode) {
    case AblationMode::kUnetOnly: return "unet_only";
    case AblationMode::kDetectorOnly: return "detector_only";
    case AblationMode::kCascade: return "cascade";
  }
  return "cascade";
}

std::vector<BreakRegion> locate_breaks(const Image& image, const AblationModels& models,
                                       AblationMode mode, const CascadeConfig& config) {
  config.validate();
  switch (mode) {
    case AblationMode::kUnetOnly: {
      if (!models.full_segmenter) throw ConfigError("unet_only needs a full-image segmenter");
      const auto mask = predict_mask(*models.full_segmenter, image, config.mask_threshold);
      return regions_from_grid(mask.labels, image.width, image.height,
                               config.min_region_pixels);
    }
    case AblationMode::kDetectorOnly: {
      if (!models.break_detector) throw ConfigError("detector_only needs a break detector");
      std::vector<BreakRegion> out;
      for (const auto& d : models.break_detector->detect(image)) {
        if (d.scored_box.class_label != models.break_class) continue;
        const Box& b = d.scored_box.box;
        const auto x0 = static_cast<std::size_t>(std::floor(b.x_min));
        const auto y0 = static_cast<std::size_t>(std::floor(b.y_min));
        const auto x1 = std::min(image.width, static_cast<std::size_t>(std::ceil(b.x_max)));
        const auto y1 = std::min(image.height, static_cast<std::size_t>(std::ceil(b.y_max)));
        std::vector<PixelCoord> px;
        for (std::size_t y = y0; y < y1; ++y) {
          for (std::size_t x = x0; x < x1; ++x) px.push_back({x, y});
        }
        if (!px.empty()) out.push_back(make_region(std::move(px), out.size()));
      }
      return out;
    }
    case AblationMode::kCascade: {
      if (!models.string_detector || !models.crop_segmenter) {
        throw ConfigError("cascade needs a string detector and a crop segmenter");
      }
      return locate(image, *models.string_detector, *models.crop_segmenter, config).breaks;
    }
  }
  throw ConfigError("unknown ablation mode");
}

}  // namespace insloc
