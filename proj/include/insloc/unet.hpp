/*
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "insloc/image.hpp"
#include "insloc/layers.hpp"
#include "insloc/synthgen.hpp"

namespace insloc {

struct UNetConfig {
  std::size_t depth = 4;
  std::size_t base_channels = 16;
  bool use_batchnorm = true;
  std::size_t in_channels = 3;

  void validate() const;
  bool operator==(const UNetConfig&) const = default;
};

struct PaddingRequirement {
  bool ok = true;
  std::size_t top = 0;
  std::size_t bottom = 0;
  std::size_t left = 0;
  std::size_t right = 0;

  std::size_t padded(std::size_t extent, bool vertical) const {
    return extent + (vertical ? top + bottom : left + right);
  }
  bool operator==(const PaddingRequirement&) const = default;
};

/// ok when both extents divide by 2^depth, else the minimal symmetric zero
/// padding (extra pixel, if odd, goes to the bottom/right).
PaddingRequirement validate_input_size(std::size_t height, std::size_t width, std::size_t depth);

/// Channel concatenation, encoder channels first; extents must match.
Var skip_fuse(const Var& encoder_features, const Var& decoder_features);

class UNet {
 public:
  explicit UNet(UNetConfig config, std::uint64_t seed = 0, Init init = Init::kHeUniform);
  UNet(const UNet&) = delete;
  UNet& operator=(const UNet&) = delete;

  /// Logits [N, 2, H, W]. H and W must divide by 2^depth.
  Var forward(const Var& input, ops::Mode mode);

  const UNetConfig& config() const noexcept { return config_; }
  ParameterSet& parameters() noexcept { return params_; }
  const ParameterSet& parameters() const noexcept { return params_; }

  bool trained() const noexcept { return trained_; }
  void mark_trained() noexcept { trained_ = true; }

  std::vector<NamedTensor> state() const;
  static std::unique_ptr<UNet> from_state(std::span<const NamedTensor> entries);

 private:
  struct ConvUnit {
    Conv2d conv;
    BatchNorm2d* norm = nullptr;
  };
  Var unit(const ConvUnit& u, const Var& x, ops::Mode mode);

  UNetConfig config_;
  ParameterSet params_;
  std::deque<BatchNorm2d> norms_;
  std::vector<ConvUnit> units_;  // two per encoder level, bottleneck and decoder level
  std::vector<TConv2x2> ups_;
  std::unique_ptr<Conv2d> head_;
  bool trained_ = false;
};

struct SegmentationMask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> labels;  // 1 = broken
  std::vector<double> probabilities;  // broken-class probability

  /// Gray PNG raster: 0 = normal, 255 = broken.
  Image to_image() const;
  static SegmentationMask from_image(const Image& mask);
};

/// Softmax over the two logit channels; broken iff probability >= threshold.
/// Inputs of any size are zero-padded (in normalized units) and unpadded.
SegmentationMask predict_mask(UNet& net, const Image& image, double threshold = 0.5);

struct SegSample {
  Image image;   // RGB
  Image labels;  // gray, nonzero = broken
};

struct LossCurve {
  std::vector<std::pair<std::size_t, double>> points;

  std::string to_csv() const;
  static LossCurve from_csv(std::string_view text);
  /// Mean of the first / last `window` points.
  double head_mean(std::size_t window) const;
  double tail_mean(std::size_t window) const;
};

struct SegTrainConfig {
  OptimizerConfig optimizer = OptimizerConfig::adam_defaults();
  std::size_t steps = 3000;
  std::uint64_t seed = 0;
  bool augment = true;
  /// Cross-entropy weight of broken pixels relative to normal ones.
  double broken_weight = 1.0;
  /// When nonzero, each step trains on a random window x window sub-image
  /// (whole extents for smaller images).
  std::size_t window = 0;

  void validate() const;
};

/// Batch size 1; each step draws one sample and one of the ops
/// {identity, rot90, rot180, rot270, flip_h, flip_v}.
LossCurve train_segmenter(UNet& net, std::span<const SegSample> samples,
                          const SegTrainConfig& config);

}  // namespace insloc
