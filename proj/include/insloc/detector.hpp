/*
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

// Two-stage box detector: conv backbone, region proposal head and a
// per-region classification/refinement head.

#include <array>
#include <cstdint>
#include <deque>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "insloc/boxgeom.hpp"
#include "insloc/image.hpp"
#include "insloc/layers.hpp"
#include "insloc/unet.hpp"

namespace insloc {

struct DetTrainConfig {
  OptimizerConfig optimizer = OptimizerConfig::momentum_defaults();
  std::size_t batch_size = 2;
  std::size_t max_steps = 2000;
  /// From this fraction of max_steps on, the learning rate is scaled by 0.1.
  /// 1.0 keeps it constant.
  double lr_drop_fraction = 1.0;
  /// Jittered copies of every truth box added to the head's training regions.
  std::size_t jitter_copies = 8;
  /// Standard deviation of the jitter, as a fraction of box width/height.
  double jitter_sigma = 0.06;
  std::uint64_t seed = 0;
};

struct DetectorConfig {
  std::vector<std::size_t> backbone_channels{16, 32, 64};
  std::size_t rpn_channels = 256;
  AnchorConfig anchors{{48.0, 80.0, 128.0}, {0.5, 1.0, 2.0}, 8};
  /// Foreground class names; index 0 of the head is background.
  std::vector<std::string> classes{"insulator"};

  std::size_t pre_nms_top_k = 600;
  std::size_t proposal_top_k = 32;
  std::size_t train_proposal_top_k = 64;
  double nms_score_threshold = 0.0;
  double nms_iou_threshold = 0.7;
  double min_proposal_side = 2.0;

  std::size_t roi_output_size = 7;
  /// Regions are scaled about their center by this factor before pooling.
  double roi_context = 1.4;
  std::size_t head_hidden = 256;

  double rpn_positive_iou = 0.7;
  double rpn_negative_iou = 0.3;
  std::size_t rpn_batch = 256;
  std::size_t head_batch = 64;
  std::size_t head_max_positives = 16;
  double head_positive_iou = 0.5;
  double rpn_loss_weight = 1.0;
  double head_loss_weight = 1.0;
  /// Regression targets are multiplied by these (tx, ty, tw, th) weights.
  std::array<double, 4> box_weights{10.0, 10.0, 5.0, 5.0};

  /// Head passes at inference; each pass but the last moves the boxes.
  std::size_t refine_iterations = 3;
  double detect_score_threshold = 0.5;
  double final_nms_iou_threshold = 0.5;

  DetTrainConfig train;

  std::size_t stride() const noexcept { return std::size_t{1} << backbone_channels.size(); }
  void validate() const;
};

struct ProposalSet {
  std::vector<Box> boxes;
  std::vector<double> objectness;  // sigmoid scores, descending
};

struct Detection {
  ScoredBox scored_box;
  std::size_t source_proposal_index = 0;

  bool operator==(const Detection&) const = default;
};

enum class AnchorLabel : std::int8_t { kIgnore = -1, kNegative = 0, kPositive = 1 };

struct RpnTargets {
  std::vector<AnchorLabel> labels;
  std::vector<BoxDelta> deltas;  // meaningful for positives only
  std::vector<std::size_t> matched_truth;
};

/// Positive iff IoU >= rpn_positive_iou with some truth or the anchor has the
/// highest IoU for some truth; negative iff max IoU < rpn_negative_iou.
/// Every truth with a nonzero overlap keeps at least one positive anchor.
RpnTargets assign_rpn_targets(std::span<const Box> anchors, std::span<const Box> truths,
                              const DetectorConfig& config);

/// Keeps at most rpn_batch labelled anchors, at most half positive; the rest
/// become kIgnore.
void sample_rpn_batch(RpnTargets& targets, std::size_t rpn_batch, std::mt19937_64& rng);

/// objectness [1, 9, H, W] logits, deltas [1, 36, H, W]; anchors in
/// generate_anchors order. Proposals are decoded, clipped, filtered by
/// min_proposal_side, cut to pre_nms_top_k, suppressed and cut to top_k.
ProposalSet propose(const Tensor& objectness, const Tensor& deltas, std::span<const Box> anchors,
                    std::size_t image_width, std::size_t image_height,
                    const DetectorConfig& config, std::size_t top_k);

/// Bilinear crop-and-resize of [1, C, H, W] features to [C, size, size].
Var roi_feature(const Var& features, const Box& proposal, std::size_t size,
                double spatial_scale);

struct RpnOutput {
  Var objectness;
  Var deltas;
};

struct HeadOutput {
  Var class_logits;  // [K, classes + 1]
  Var box_deltas;    // [K, 4 * classes]
};

struct DetSample {
  Image image;
  std::vector<Box> boxes;
  std::vector<std::size_t> labels;  // index into DetectorConfig::classes
};

class Detector {
 public:
  explicit Detector(DetectorConfig config, std::uint64_t seed = 0, Init init = Init::kHeUniform);
  Detector(const Detector&) = delete;
  Detector& operator=(const Detector&) = delete;

  /// Output of every conv block; the last is the map shared by both heads.
  /// Image extents must divide by the backbone stride.
  std::vector<Var> backbone_forward(const Var& image) const;
  RpnOutput rpn_forward(const Var& features) const;
  HeadOutput head_forward(const std::vector<Var>& levels, std::span<const Box> regions) const;

  /// Joint RPN and head loss of one image. Sampling draws from `rng`.
  /// Proposal boxes enter the head loss as constants; `fixed_proposals`
  /// replaces the ones computed from the current RPN output.
  Var image_loss(const Var& image, std::span<const Box> truths,
                 std::span<const std::size_t> labels, std::mt19937_64& rng,
                 const std::vector<Box>* fixed_proposals = nullptr) const;

  /// Throws TrainingError unless the weights are trained or loaded.
  std::vector<Detection> detect(const Image& image) const;

  const DetectorConfig& config() const noexcept { return config_; }
  DetectorConfig& mutable_config() noexcept { return config_; }
  ParameterSet& parameters() noexcept { return params_; }
  const ParameterSet& parameters() const noexcept { return params_; }
  bool trained() const noexcept { return trained_; }
  void mark_trained() noexcept { trained_ = true; }

  std::vector<NamedTensor> state() const;
  /// Architecture comes from `config`; names and shapes must match it.
  static std::unique_ptr<Detector> from_state(std::span<const NamedTensor> entries,
                                              const DetectorConfig& config);

 private:
  std::vector<Box> anchors_for(std::size_t feature_height, std::size_t feature_width) const;
  BoxDelta weighted(const BoxDelta& d) const;
  BoxDelta unweighted(const double* raw) const;

  DetectorConfig config_;
  ParameterSet params_;
  std::vector<Conv2d> convs_;  // two per block
  std::unique_ptr<Conv2d> rpn_conv_, rpn_obj_, rpn_delta_;
  std::unique_ptr<Linear> fc_, cls_, reg_;
  bool trained_ = false;
};

/// Batch-mean of image_loss per step with the configured optimizer.
LossCurve train_detector(Detector& detector, std::span<const DetSample> samples,
                         const DetTrainConfig& config);

}  // namespace insloc
