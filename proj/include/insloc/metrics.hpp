/*
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "insloc/boxgeom.hpp"
#include "insloc/cascade.hpp"
#include "insloc/image.hpp"

namespace insloc {

/// TP / (TP + FP); nothing when no object was located.
std::optional<double> precision(const EvalCounts& counts) noexcept;
/// TP / (TP + FN); nothing when there are no targets.
std::optional<double> recall(const EvalCounts& counts) noexcept;

struct PRResult {
  std::optional<double> precision;
  std::optional<double> recall;
  EvalCounts counts;

  static PRResult from_counts(const EvalCounts& counts) noexcept;
  bool operator==(const PRResult&) const = default;
};

/// {"precision": p, "recall": r, "tp": .., "fp": .., "fn": ..}; undefined
/// values are null.
std::string pr_to_json(const PRResult& result);
PRResult pr_from_json(std::string_view text);

/// Sums match_detections over aligned per-image lists.
PRResult evaluate_detection(std::span<const std::vector<ScoredBox>> detections,
                            std::span<const std::vector<Box>> truths,
                            double overlap_threshold = 0.95);

/// True missing-disc footprints of a mask: its 4-connected nonzero components.
std::vector<std::vector<PixelCoord>> true_footprints(const Image& mask);

/// Instance counts of one image. Regions are taken in order; a region is a
/// TP when the pixel nearest its centroid lies in a footprint not yet matched.
EvalCounts match_locations(std::span<const BreakRegion> regions, const Image& truth_mask);

PRResult evaluate_location(std::span<const std::vector<BreakRegion>> regions,
                           std::span<const Image> truth_masks);

}  // namespace insloc
