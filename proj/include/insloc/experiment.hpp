/*
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

// Training recipes and evaluation protocols shared by the CLI and the
// acceptance harness. Every random choice derives from one run seed.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "insloc/cascade.hpp"
#include "insloc/config.hpp"
#include "insloc/metrics.hpp"
#include "insloc/synthgen.hpp"

namespace insloc {

/// Sub-seeds of a run, one per independent random stream.
enum class SeedStream : std::uint64_t {
  kStringDetectorInit = 101,
  kStringDetectorTrain,
  kCropSegmenterInit = 201,
  kCropSegmenterTrain,
  kFullSegmenterInit = 301,
  kFullSegmenterTrain,
  kBreakDetectorInit = 401,
  kBreakDetectorTrain,
  kSweepEvalCorpus = 501,
  kSweepCorpus = 600,
};

std::uint64_t stream_seed(std::uint64_t seed, SeedStream stream, std::uint64_t offset = 0);

std::vector<CorpusSample> select_samples(std::span<const CorpusSample> corpus,
                                         std::span<const std::size_t> indices);
/// Stratified split of the corpus with `folds` folds; returns fold `fold`.
FoldSplit corpus_split(std::span<const CorpusSample> corpus, std::size_t folds, std::size_t fold,
                       std::uint64_t seed);

/// String boxes with label 0; with_breaks adds the bounding box of every
/// true missing-disc footprint with label 1.
std::vector<DetSample> detection_samples(std::span<const CorpusSample> corpus, bool with_breaks);
/// One crop per string box, cut exactly as the cascade cuts detections.
std::vector<SegSample> crop_samples(std::span<const CorpusSample> corpus,
                                    const CascadeConfig& cascade, std::size_t depth);
std::vector<SegSample> full_image_samples(std::span<const CorpusSample> corpus);

struct TrainedDetector {
  std::unique_ptr<Detector> model;
  LossCurve curve;
};

struct TrainedSegmenter {
  std::unique_ptr<UNet> model;
  LossCurve curve;
};

TrainedDetector train_string_detector(std::span<const CorpusSample> corpus, const RunConfig& config,
                                      std::uint64_t seed);
/// Detector with classes {insulator, broken_disc}; the smallest anchor size
/// is lowered to 16 so that single-disc boxes have matching anchors.
TrainedDetector train_break_detector(std::span<const CorpusSample> corpus, const RunConfig& config,
                                     std::uint64_t seed);
TrainedSegmenter train_crop_segmenter(std::span<const CorpusSample> corpus, const RunConfig& config,
                                      std::uint64_t seed);
TrainedSegmenter train_full_segmenter(std::span<const CorpusSample> corpus, const RunConfig& config,
                                      std::uint64_t seed);
DetectorConfig break_detector_config(const DetectorConfig& strings);

/// String-box detections of every image.
std::vector<std::vector<ScoredBox>> detect_corpus(const Detector& detector,
                                                  std::span<const CorpusSample> corpus);
PRResult evaluate_detector(const Detector& detector, std::span<const CorpusSample> corpus,
                           double overlap_threshold);

/// Break-location result of one ablation mode. Throws Error on an empty corpus.
PRResult run_ablation(std::span<const CorpusSample> corpus, const AblationModels& models,
                      AblationMode mode, const CascadeConfig& cascade);

/// Location result of a crop segmenter fed the true string boxes.
PRResult evaluate_segmenter_on_truth(UNet& segmenter, std::span<const CorpusSample> corpus,
                                     const CascadeConfig& cascade);

enum class CrossvalProtocol { kDetection, kSegmentation };
CrossvalProtocol parse_crossval_protocol(std::string_view name);
std::string_view crossval_protocol_name(CrossvalProtocol protocol);

struct CrossvalResult {
  CrossvalProtocol protocol = CrossvalProtocol::kDetection;
  std::vector<PRResult> folds;
  /// Means over folds where the metric is defined; population spread.
  std::optional<double> mean_precision;
  std::optional<double> mean_recall;
  std::optional<double> precision_spread;
  std::optional<double> recall_spread;

  bool operator==(const CrossvalResult&) const = default;
};

/// Aggregates per-fold results into means and spreads.
CrossvalResult aggregate_folds(CrossvalProtocol protocol, std::vector<PRResult> folds);

/// k-fold (eval.detection_folds or eval.segmentation_folds) training and
/// evaluation. Training errors name the failing fold.
CrossvalResult crossval(std::span<const CorpusSample> corpus, CrossvalProtocol protocol,
                        const RunConfig& config, std::uint64_t seed);
std::string crossval_to_json(const CrossvalResult& result);
CrossvalResult crossval_from_json(std::string_view text);

struct SweepPoint {
  std::size_t training_size = 0;
  PRResult detection;
  PRResult location;

  bool operator==(const SweepPoint&) const = default;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  std::uint64_t seed = 0;

  bool operator==(const SweepResult&) const = default;
};

/// Trains a cascade on a fresh corpus per size in config.sweep_sizes and
/// evaluates each on one held-out corpus of config.sweep_eval_size images.
/// `progress`, if set, is called after each point.
SweepResult sweep_training_size(const RunConfig& config, std::uint64_t seed,
                                const std::function<void(const SweepPoint&)>& progress = {});
std::string sweep_to_csv(const SweepResult& result);
SweepResult sweep_from_csv(std::string_view text);

struct StageStats {
  double mean_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;

  bool operator==(const StageStats&) const = default;
};

struct TimingReport {
  std::size_t image_count = 0;
  StageStats detect, crop, segment, map, total;

  bool operator==(const TimingReport&) const = default;
};

/// Times locate on every image after `warmup` untimed runs (cycling through
/// the corpus). Throws Error on an empty corpus.
TimingReport bench(std::span<const CorpusSample> corpus, const Detector& detector, UNet& segmenter,
                   const CascadeConfig& cascade, std::size_t warmup);
/// Summary statistics of per-image stage timings.
TimingReport summarize_timings(std::span<const StageTiming> timings);
std::string timing_to_json(const TimingReport& report);
TimingReport timing_from_json(std::string_view text);

}  // namespace insloc
