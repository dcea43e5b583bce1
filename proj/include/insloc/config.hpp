/*
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

// Flat "key = value" run configuration. Lines starting with '#' and blank
// lines are ignored; unknown or repeated keys are errors. Keys are listed by
// run_config_keys() and written in full by run_config_to_text().

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "insloc/cascade.hpp"
#include "insloc/detector.hpp"
#include "insloc/synthgen.hpp"
#include "insloc/unet.hpp"

namespace insloc {

struct RunConfig {
  GeneratorConfig generator;
  std::size_t corpus_size = 300;
  double positive_fraction = 2.0 / 3.0;

  DetectorConfig detector;
  UNetConfig unet;
  /// Segmenter trained on string crops (cascade).
  SegTrainConfig segmenter;
  /// Segmenter trained on whole images (unet_only ablation).
  SegTrainConfig full_segmenter;
  CascadeConfig cascade;

  double overlap_threshold = 0.95;
  std::size_t detection_folds = 3;
  std::size_t segmentation_folds = 4;
  /// Held-out fold of the detection split used by eval, ablate and bench.
  std::size_t fold = 0;

  std::vector<std::size_t> sweep_sizes{50, 150, 300};
  std::size_t sweep_eval_size = 100;

  std::size_t bench_warmup = 2;

  RunConfig();
  void validate() const;
};

/// Applies the assignments in `text` on top of the defaults and validates.
/// Errors name the line number.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Every key, one per line; parse_run_config(run_config_to_text(c)) == c.
std::string run_config_to_text(const RunConfig& config);
std::vector<std::string> run_config_keys();

}  // namespace insloc
