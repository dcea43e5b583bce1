/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include "insloc/metrics.hpp"

#include <cmath>
#include <json.hpp>

#include "insloc/error.hpp"

namespace insloc {

std::optional<double> precision(const EvalCounts& c) noexcept {
  if (c.tp + c.fp == 0) return std::nullopt;
  return double(c.tp) / double(c.tp + c.fp);
}

std::optional<double> recall(const EvalCounts& c) noexcept {
  if (c.tp + c.fn == 0) return std::nullopt;
  return double(c.tp) / double(c.tp + c.fn);
}

PRResult PRResult::from_counts(const EvalCounts& counts) noexcept {
  return {insloc::precision(counts), insloc::recall(counts), counts};
}

std::string pr_to_json(const PRResult& r) {
  nlohmann::ordered_json j;
  j["precision"] = r.precision ? nlohmann::ordered_json(*r.precision) : nlohmann::ordered_json();
  j["recall"] = r.recall ? nlohmann::ordered_json(*r.recall) : nlohmann::ordered_json();
  j["tp"] = r.counts.tp;
  j["fp"] = r.counts.fp;
  j["fn"] = r.counts.fn;
  return j.dump(2) + "\n";
}

PRResult pr_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    PRResult r;
    r.counts = {j.at("tp").get<std::size_t>(), j.at("fp").get<std::size_t>(),
                j.at("fn").get<std::size_t>()};
    if (!j.at("precision").is_null()) r.precision = j.at("precision").get<double>();
    if (!j.at("recall").is_null()) r.recall = j.at("recall").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("metrics JSON: ") + e.what());
  }
}

PRResult evaluate_detection(std::span<const std::vector<ScoredBox>> detections,
                            std::span<const std::vector<Box>> truths, double overlap_threshold) {
  if (detections.size() != truths.size()) {
    throw Error("evaluate_detection: " + std::to_string(detections.size()) +
                " detection lists for " + std::to_string(truths.size()) + " images");
  }
  EvalCounts total;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    total += match_detections(detections[i], truths[i], overlap_threshold);
  }
  return PRResult::from_counts(total);
}

std::vector<std::vector<PixelCoord>> true_footprints(const Image& mask) {
  if (mask.channels != 1) throw ShapeError("true_footprints: mask must be single-channel");
  return connected_components(mask.pixels, mask.width, mask.height);
}

EvalCounts match_locations(std::span<const BreakRegion> regions, const Image& truth_mask) {
  const auto footprints = true_footprints(truth_mask);
  std::vector<long> owner(truth_mask.width * truth_mask.height, -1);
  for (std::size_t f = 0; f < footprints.size(); ++f) {
    for (const auto& p : footprints[f]) owner[p.y * truth_mask.width + p.x] = long(f);
  }
  std::vector<bool> matched(footprints.size(), false);
  EvalCounts c;
  for (const auto& r : regions) {
    const double cx = std::round(r.centroid[0]), cy = std::round(r.centroid[1]);
    long f = -1;
    if (cx >= 0.0 && cy >= 0.0 && cx < double(truth_mask.width) && cy < double(truth_mask.height)) {
      f = owner[std::size_t(cy) * truth_mask.width + std::size_t(cx)];
    }
    if (f >= 0 && !matched[std::size_t(f)]) {
      matched[std::size_t(f)] = true;
      ++c.tp;
    } else {
      ++c.fp;
    }
  }
  c.fn = footprints.size() - c.tp;
  return c;
}

PRResult evaluate_location(std::span<const std::vector<BreakRegion>> regions,
                           std::span<const Image> truth_masks) {
  if (regions.size() != truth_masks.size()) {
    throw Error("evaluate_location: " + std::to_string(regions.size()) + " region lists for " +
                std::to_string(truth_masks.size()) + " masks");
  }
  EvalCounts total;
  for (std::size_t i = 0; i < regions.size(); ++i) total += match_locations(regions[i], truth_masks[i]);
  return PRResult::from_counts(total);
}

}  // namespace insloc
