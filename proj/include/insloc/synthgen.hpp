/*
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "insloc/boxgeom.hpp"
#include "insloc/image.hpp"

namespace insloc {

struct InsulatorStringSpec {
  std::size_t disc_count = 8;
  double disc_radius = 8.0;
  double spacing = 15.0;
  /// Direction of the string axis, radians from the +x axis.
  double angle = 0.0;
  /// Center of the string in pixel coordinates.
  std::array<double, 2> anchor_point{0.0, 0.0};
  std::set<std::size_t> missing_indices;
  std::array<double, 3> disc_color{90.0, 180.0, 200.0};

  std::vector<std::array<double, 2>> disc_centers() const;
};

enum class Background { kGradient, kNoiseTexture, kStripedField };

struct SceneSpec {
  std::size_t width = 256;
  std::size_t height = 256;
  Background background = Background::kGradient;
  std::uint64_t seed = 0;
  std::vector<InsulatorStringSpec> strings;
  std::size_t clutter_count = 0;
  double noise_sigma = 5.0;
};

struct SampleAnnotation {
  std::string image_path;
  std::string mask_path;
  std::vector<Box> boxes;
  bool is_positive = false;

  bool operator==(const SampleAnnotation&) const = default;
};

struct RenderedScene {
  Image image;  // RGB
  Image mask;   // gray, 0 or 255
  SampleAnnotation annotation;
};

/// Knobs for scene sampling. Defaults give 256x256 scenes with 1-3 strings.
struct GeneratorConfig {
  std::size_t image_size = 256;
  std::size_t strings_min = 1;
  std::size_t strings_max = 3;
  std::size_t disc_count_min = 6;
  std::size_t disc_count_max = 9;
  double disc_radius_min = 7.0;
  double disc_radius_max = 9.5;
  std::size_t clutter_min = 2;
  std::size_t clutter_max = 6;
  std::size_t missing_max = 2;
  /// Chance that a further string of a positive scene is also broken.
  double extra_broken_probability = 0.3;
  double noise_sigma = 5.0;

  void validate() const;
};

/// Pixels whose centers lie inside the disc footprint (distance <= radius).
std::vector<std::pair<std::size_t, std::size_t>> disc_footprint(double cx, double cy,
                                                                double radius,
                                                                std::size_t width,
                                                                std::size_t height);

/// Deterministic for a fixed spec. Throws Error when a string leaves the
/// image or strings overlap.
RenderedScene render_scene(const SceneSpec& spec);

/// Random scene with non-overlapping strings; `positive` scenes get at least
/// one missing interior disc. Placement is retried up to 100 times per string.
SceneSpec sample_scene(const GeneratorConfig& config, bool positive, std::mt19937_64& rng);

struct CorpusSample {
  Image image;
  Image mask;
  SampleAnnotation annotation;
  std::uint64_t seed = 0;
};

struct CorpusManifest {
  std::vector<SampleAnnotation> samples;
  std::uint64_t seed = 0;
  std::size_t image_size = 0;
  std::size_t positive_count = 0;
  std::size_t negative_count = 0;
};

/// Per-sample seed derived from the corpus seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// round(n * positive_fraction), the number of positives in a corpus.
std::size_t corpus_positive_count(std::size_t n, double positive_fraction);

/// In-memory corpus with round(n * positive_fraction) positives.
std::vector<CorpusSample> generate_corpus(std::size_t n, double positive_fraction,
                                          const GeneratorConfig& config, std::uint64_t seed);

/// Generates a corpus and writes images/NNNN.png, masks/NNNN.png and
/// manifest.json under `dir`.
CorpusManifest make_corpus(const std::filesystem::path& dir, std::size_t n,
                           double positive_fraction, const GeneratorConfig& config,
                           std::uint64_t seed);

std::string manifest_to_json(const CorpusManifest& manifest);
CorpusManifest manifest_from_json(std::string_view text);
CorpusManifest load_manifest(const std::filesystem::path& dir);

/// Loads every sample listed in dir/manifest.json.
std::vector<CorpusSample> load_corpus(const std::filesystem::path& dir);

struct FoldSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Stratified k-fold split over sample indices. `is_positive[i]` is the
/// stratum of sample i.
FoldSplit split_kfold(const std::vector<bool>& is_positive, std::size_t k,
                      std::size_t fold_index, std::uint64_t seed);

enum class AugmentOp { kIdentity, kRot90, kRot180, kRot270, kFlipH, kFlipV };

AugmentOp parse_augment_op(std::string_view name);
std::string_view augment_op_name(AugmentOp op);

/// Same geometric transform for any channel count. kRot90 maps (x, y) of a
/// W x H image to (y, W - 1 - x) of an H x W image; kFlipH mirrors x.
Image augment(const Image& image, AugmentOp op);
/// Box in a W x H frame under the same transform.
Box augment_box(const Box& box, std::size_t width, std::size_t height, AugmentOp op);

}  // namespace insloc
