/*
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace insloc {

struct Box {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const noexcept { return x_max - x_min; }
  double height() const noexcept { return y_max - y_min; }
  double area() const noexcept { return width() * height(); }
  double center_x() const noexcept { return 0.5 * (x_min + x_max); }
  double center_y() const noexcept { return 0.5 * (y_min + y_max); }
  bool valid() const noexcept { return x_max > x_min && y_max > y_min; }
  std::array<double, 4> as_array() const noexcept { return {x_min, y_min, x_max, y_max}; }

  bool operator==(const Box&) const = default;
};

struct ScoredBox {
  Box box;
  double score = 0.0;
  std::string class_label = "string";

  bool operator==(const ScoredBox&) const = default;
};

struct AnchorConfig {
  std::array<double, 3> sizes{16.0, 32.0, 64.0};
  std::array<double, 3> ratios{0.5, 1.0, 2.0};
  std::size_t stride = 8;

  void validate() const;
};

struct BoxDelta {
  double tx = 0.0;
  double ty = 0.0;
  double tw = 0.0;
  double th = 0.0;
};

struct EvalCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  EvalCounts& operator+=(const EvalCounts& o) noexcept {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  bool operator==(const EvalCounts&) const = default;
};

inline constexpr std::size_t kAnchorsPerCell = 9;
inline constexpr double kDeltaClamp = 4.0;

double iou(const Box& a, const Box& b) noexcept;

/// Greedy NMS. Equal scores keep input order; output is in descending score.
std::vector<ScoredBox> nms(std::span<const ScoredBox> candidates, double score_threshold,
                           double iou_threshold);
/// Indices into `candidates` of the boxes nms() keeps, in output order.
std::vector<std::size_t> nms_indices(std::span<const ScoredBox> candidates,
                                     double score_threshold, double iou_threshold);

/// Anchor k of cell (y, x) sits at index (y * feature_width + x) * 9 + k,
/// where k = size_index * 3 + ratio_index. Cell centers are
/// ((x + 0.5) * stride, (y + 0.5) * stride).
std::vector<Box> generate_anchors(const AnchorConfig& config, std::size_t feature_height,
                                  std::size_t feature_width);

BoxDelta encode_box(const Box& target, const Box& anchor) noexcept;
/// tw and th are clamped to [-4, 4] before exponentiation.
Box decode_box(const BoxDelta& delta, const Box& anchor) noexcept;

std::optional<Box> clip_to_image(const Box& box, double width, double height) noexcept;

/// Greedy one-to-one matching in descending detection score.
EvalCounts match_detections(std::span<const ScoredBox> detections, std::span<const Box> truths,
                            double overlap_threshold);

}  // namespace insloc
