/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include "insloc/boxgeom.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "insloc/error.hpp"

namespace insloc {

void AnchorConfig::validate() const {
  for (double s : sizes) {
    if (!(s > 0.0)) throw ConfigError("anchor sizes must be positive");
  }
  for (double r : ratios) {
    if (!(r > 0.0)) throw ConfigError("anchor ratios must be positive");
  }
  if (stride == 0) throw ConfigError("anchor stride must be positive");
}

double iou(const Box& a, const Box& b) noexcept {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  // Ordered sum keeps iou(a, b) == iou(b, a) bit for bit under FMA contraction.
  const double area_a = a.area();
  const double area_b = b.area();
  return inter / (std::min(area_a, area_b) + std::max(area_a, area_b) - inter);
}

namespace {

std::vector<std::size_t> by_descending_score(std::span<const ScoredBox> boxes) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return boxes[a].score > boxes[b].score; });
  return order;
}

}  // namespace

std::vector<std::size_t> nms_indices(std::span<const ScoredBox> candidates,
                                     double score_threshold, double iou_threshold) {
  std::vector<std::size_t> kept;
  for (auto i : by_descending_score(candidates)) {
    if (candidates[i].score < score_threshold) continue;
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return iou(candidates[k].box, candidates[i].box) > iou_threshold;
    });
    if (!suppressed) kept.push_back(i);
  }
  return kept;
}

std::vector<ScoredBox> nms(std::span<const ScoredBox> candidates, double score_threshold,
                           double iou_threshold) {
  std::vector<ScoredBox> out;
  for (auto i : nms_indices(candidates, score_threshold, iou_threshold)) {
    out.push_back(candidates[i]);
  }
  return out;
}

std::vector<Box> generate_anchors(const AnchorConfig& config, std::size_t feature_height,
                                  std::size_t feature_width) {
  config.validate();
  if (feature_height == 0 || feature_width == 0) {
    throw ShapeError("generate_anchors: feature extents must be positive");
  }
  std::array<std::pair<double, double>, kAnchorsPerCell> half_extents;
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t r = 0; r < 3; ++r) {
      const double w = config.sizes[s] / std::sqrt(config.ratios[r]);
      const double h = config.sizes[s] * std::sqrt(config.ratios[r]);
      half_extents[s * 3 + r] = {0.5 * w, 0.5 * h};
    }
  }
  const double stride = static_cast<double>(config.stride);
  std::vector<Box> anchors;
  anchors.reserve(kAnchorsPerCell * feature_height * feature_width);
  for (std::size_t y = 0; y < feature_height; ++y) {
    const double cy = (static_cast<double>(y) + 0.5) * stride;
    for (std::size_t x = 0; x < feature_width; ++x) {
      const double cx = (static_cast<double>(x) + 0.5) * stride;
      for (auto [hw, hh] : half_extents) anchors.push_back({cx - hw, cy - hh, cx + hw, cy + hh});
    }
  }
  return anchors;
}

BoxDelta encode_box(const Box& target, const Box& anchor) noexcept {
  return {(target.center_x() - anchor.center_x()) / anchor.width(),
          (target.center_y() - anchor.center_y()) / anchor.height(),
          std::log(target.width() / anchor.width()), std::log(target.height() / anchor.height())};
}

Box decode_box(const BoxDelta& delta, const Box& anchor) noexcept {
  const double cx = anchor.center_x() + delta.tx * anchor.width();
  const double cy = anchor.center_y() + delta.ty * anchor.height();
  const double w = anchor.width() * std::exp(std::clamp(delta.tw, -kDeltaClamp, kDeltaClamp));
  const double h = anchor.height() * std::exp(std::clamp(delta.th, -kDeltaClamp, kDeltaClamp));
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

std::optional<Box> clip_to_image(const Box& box, double width, double height) noexcept {
  Box c{std::clamp(box.x_min, 0.0, width), std::clamp(box.y_min, 0.0, height),
        std::clamp(box.x_max, 0.0, width), std::clamp(box.y_max, 0.0, height)};
  if (!c.valid()) return std::nullopt;
  return c;
}

EvalCounts match_detections(std::span<const ScoredBox> detections, std::span<const Box> truths,
                            double overlap_threshold) {
  std::vector<bool> matched(truths.size(), false);
  EvalCounts counts;
  for (auto i : by_descending_score(detections)) {
    std::size_t best = truths.size();
    double best_iou = -1.0;
    for (std::size_t t = 0; t < truths.size(); ++t) {
      if (matched[t]) continue;
      const double o = iou(detections[i].box, truths[t]);
      if (o > best_iou) {
        best_iou = o;
        best = t;
      }
    }
    if (best < truths.size() && best_iou >= overlap_threshold) {
      matched[best] = true;
      ++counts.tp;
    } else {
      ++counts.fp;
    }
  }
  counts.fn = truths.size() - counts.tp;
  return counts;
}

}  // namespace insloc
