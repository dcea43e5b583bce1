/*
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

// Detect strings, crop each with a margin, segment the crop and map broken
// pixels back to the original image.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "insloc/boxgeom.hpp"
#include "insloc/detector.hpp"
#include "insloc/image.hpp"
#include "insloc/unet.hpp"

namespace insloc {

struct CascadeConfig {
  double margin_fraction = 0.1;
  std::size_t min_region_pixels = 10;
  double mask_threshold = 0.5;

  void validate() const;
};

struct PixelCoord {
  std::size_t x = 0;
  std::size_t y = 0;

  bool operator==(const PixelCoord&) const = default;
  auto operator<=>(const PixelCoord&) const = default;
};

/// A crop of the original image, zero-padded for the segmenter. Crop pixel
/// (cx, cy) shows original pixel (x0 + cx - pad.left, y0 + cy - pad.top).
struct CropRecord {
  /// Pixel-aligned crop window in the original frame: [x0, x1) x [y0, y1).
  Box source_box;
  Image crop_image;
  PaddingRequirement pad;
  double scale = 1.0;
  std::size_t image_width = 0;
  std::size_t image_height = 0;

  std::size_t x0() const noexcept { return static_cast<std::size_t>(source_box.x_min); }
  std::size_t y0() const noexcept { return static_cast<std::size_t>(source_box.y_min); }
  bool is_padding(std::size_t cx, std::size_t cy) const noexcept;
  /// (x0 + cx - pad.left, y0 + cy - pad.top) clamped into the image.
  PixelCoord to_original(std::size_t cx, std::size_t cy) const noexcept;
  /// Crop pixel showing an original pixel inside source_box.
  PixelCoord to_crop(PixelCoord original) const;
};

/// Expands the box by margin_fraction of its width/height per side, rounds
/// outward to whole pixels, clips to the image and zero-pads to the
/// segmenter's size rule. Throws Error if the clipped window is empty.
CropRecord crop_and_normalize(const Image& image, const Box& detection, double margin_fraction,
                              std::size_t depth);

/// One 4-connected group of broken pixels in the original frame.
struct BreakRegion {
  std::vector<PixelCoord> pixels;  // row-major order
  std::size_t string_index = 0;
  Box bbox;                        // [x_min, x_max + 1) pixel bounds
  std::array<double, 2> centroid{0.0, 0.0};

  bool operator==(const BreakRegion&) const = default;
};

/// Builds bbox and centroid from pixels (which must be non-empty).
BreakRegion make_region(std::vector<PixelCoord> pixels, std::size_t string_index);

/// 4-connected components of nonzero cells of a width x height grid, each in
/// row-major order, components ordered by their first pixel.
std::vector<std::vector<PixelCoord>> connected_components(std::span<const std::uint8_t> cells,
                                                          std::size_t width, std::size_t height);

/// Strips padding, maps broken pixels to the original frame and keeps
/// components of at least min_region_pixels.
std::vector<BreakRegion> map_mask_to_original(const SegmentationMask& mask,
                                              const CropRecord& record,
                                              std::size_t min_region_pixels,
                                              std::size_t string_index = 0);

struct StageTiming {
  double detect_ms = 0.0;
  double crop_ms = 0.0;
  double segment_ms = 0.0;
  double map_ms = 0.0;
  double total_ms = 0.0;
};

struct LocatorReport {
  std::vector<ScoredBox> string_boxes;
  /// Crop window of each string box; break regions lie inside their window.
  std::vector<Box> crop_windows;
  std::vector<BreakRegion> breaks;
  StageTiming timing;
};

/// Runs detector, cropping, segmentation and mapping. Where crops overlap,
/// a region sharing a pixel with one from a lower string index is dropped.
LocatorReport locate(const Image& image, const Detector& detector, UNet& segmenter,
                     const CascadeConfig& config);

/// The stages after detection, run on given string boxes; detect_ms is 0.
LocatorReport locate_in_boxes(const Image& image, std::span<const ScoredBox> boxes,
                              UNet& segmenter, const CascadeConfig& config);

/// JSON with string boxes, regions (bbox, pixel count, centroid, string
/// index) and timings. `with_timing` false omits the timing block.
std::string report_to_json(const LocatorReport& report, bool with_timing = true);

/// RGB copy of the image with string boxes outlined and broken pixels tinted.
Image render_overlay(const Image& image, const LocatorReport& report);

enum class AblationMode { kUnetOnly, kDetectorOnly, kCascade };

AblationMode parse_ablation_mode(std::string_view name);
std::string_view ablation_mode_name(AblationMode mode);

struct AblationModels {
  const Detector* string_detector = nullptr;  // cascade
  UNet* crop_segmenter = nullptr;             // cascade
  UNet* full_segmenter = nullptr;             // unet_only
  const Detector* break_detector = nullptr;   // detector_only
  std::string break_class = "broken_disc";
};

/// Break regions of one image under an ablation mode. unet_only segments the
/// full image; detector_only turns each break-class box into a region at the
/// box's pixels.
std::vector<BreakRegion> locate_breaks(const Image& image, const AblationModels& models,
                                       AblationMode mode, const CascadeConfig& config);

}  // namespace insloc
