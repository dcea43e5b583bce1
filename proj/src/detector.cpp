/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include "insloc/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "insloc/error.hpp"

namespace insloc {

namespace {

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

ops::Region context_region(const Box& b, double context) {
  const double ex = 0.5 * (context - 1.0) * b.width();
  const double ey = 0.5 * (context - 1.0) * b.height();
  return {b.x_min - ex, b.y_min - ey, b.x_max + ex, b.y_max + ey};
}

template <typename T>
void take_random(std::vector<T>& v, std::size_t n, std::mt19937_64& rng) {
  if (v.size() <= n) return;
  std::shuffle(v.begin(), v.end(), rng);
  v.resize(n);
}

}  // namespace

void DetectorConfig::validate() const {
  if (backbone_channels.empty()) throw ConfigError("detector needs at least one backbone block");
  for (auto c : backbone_channels) {
    if (c == 0) throw ConfigError("backbone channel counts must be positive");
  }
  anchors.validate();
  if (anchors.stride != stride()) {
    throw ConfigError("anchor stride " + std::to_string(anchors.stride) +
                      " does not match backbone stride " + std::to_string(stride()));
  }
  if (classes.empty()) throw ConfigError("detector needs at least one class");
  if (rpn_channels == 0 || roi_output_size == 0 || head_hidden == 0) {
    throw ConfigError("rpn_channels, roi_output_size and head_hidden must be positive");
  }
  if (proposal_top_k == 0 || train_proposal_top_k == 0 || pre_nms_top_k == 0) {
    throw ConfigError("proposal counts must be positive");
  }
  if (!(rpn_negative_iou <= rpn_positive_iou) || rpn_negative_iou < 0 || rpn_positive_iou > 1) {
    throw ConfigError("need 0 <= rpn_negative_iou <= rpn_positive_iou <= 1");
  }
  if (rpn_batch == 0 || head_batch == 0) throw ConfigError("sample batch sizes must be positive");
  if (!(roi_context >= 1.0)) throw ConfigError("roi_context must be >= 1");
  if (refine_iterations == 0) throw ConfigError("refine_iterations must be >= 1");
  for (double w : box_weights) {
    if (!(w > 0.0)) throw ConfigError("box weights must be positive");
  }
  if (!(train.batch_size > 0)) throw ConfigError("batch_size must be positive");
  if (!(train.lr_drop_fraction > 0.0 && train.lr_drop_fraction <= 1.0)) {
    throw ConfigError("lr_drop_fraction must be in (0, 1]");
  }
  if (!(train.jitter_sigma >= 0.0)) throw ConfigError("jitter_sigma must be >= 0");
  train.optimizer.validate();
}

RpnTargets assign_rpn_targets(std::span<const Box> anchors, std::span<const Box> truths,
                              const DetectorConfig& config) {
  RpnTargets t;
  t.labels.assign(anchors.size(), AnchorLabel::kNegative);
  t.deltas.assign(anchors.size(), BoxDelta{});
  t.matched_truth.assign(anchors.size(), 0);
  if (truths.empty()) return t;
  std::vector<double> best_for_truth(truths.size(), 0.0);
  std::vector<double> best_iou(anchors.size(), 0.0);
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    for (std::size_t j = 0; j < truths.size(); ++j) {
      const double v = iou(anchors[a], truths[j]);
      if (v > best_iou[a]) {
        best_iou[a] = v;
        t.matched_truth[a] = j;
      }
      best_for_truth[j] = std::max(best_for_truth[j], v);
    }
    if (best_iou[a] >= config.rpn_positive_iou) {
      t.labels[a] = AnchorLabel::kPositive;
    } else if (best_iou[a] >= config.rpn_negative_iou) {
      t.labels[a] = AnchorLabel::kIgnore;
    }
  }
  // Every truth claims its highest-IoU anchors. An anchor already claimed by
  // an earlier truth is skipped; if all ties are taken, the truth falls back
  // to its best unclaimed anchor.
  std::vector<bool> claimed(anchors.size(), false);
  for (std::size_t j = 0; j < truths.size(); ++j) {
    if (best_for_truth[j] <= 0.0) continue;
    std::vector<std::pair<double, std::size_t>> order;
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      const double v = iou(anchors[a], truths[j]);
      if (v > 0.0) order.emplace_back(v, a);
    }
    std::stable_sort(order.begin(), order.end(),
                     [](const auto& x, const auto& y) { return x.first > y.first; });
    std::vector<std::size_t> pick;
    for (const auto& [v, a] : order) {
      if (v == best_for_truth[j] && !claimed[a]) pick.push_back(a);
    }
    if (pick.empty()) {
      for (const auto& [v, a] : order) {
        if (!claimed[a]) {
          pick.push_back(a);
          break;
        }
      }
    }
    for (auto a : pick) {
      claimed[a] = true;
      t.labels[a] = AnchorLabel::kPositive;
      t.matched_truth[a] = j;
    }
  }
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    if (t.labels[a] == AnchorLabel::kPositive) {
      t.deltas[a] = encode_box(truths[t.matched_truth[a]], anchors[a]);
    }
  }
  return t;
}

void sample_rpn_batch(RpnTargets& targets, std::size_t rpn_batch, std::mt19937_64& rng) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t a = 0; a < targets.labels.size(); ++a) {
    if (targets.labels[a] == AnchorLabel::kPositive) pos.push_back(a);
    if (targets.labels[a] == AnchorLabel::kNegative) neg.push_back(a);
  }
  auto keep_pos = pos, keep_neg = neg;
  take_random(keep_pos, rpn_batch / 2, rng);
  take_random(keep_neg, rpn_batch - keep_pos.size(), rng);
  for (auto a : pos) targets.labels[a] = AnchorLabel::kIgnore;
  for (auto a : neg) targets.labels[a] = AnchorLabel::kIgnore;
  for (auto a : keep_pos) targets.labels[a] = AnchorLabel::kPositive;
  for (auto a : keep_neg) targets.labels[a] = AnchorLabel::kNegative;
}

ProposalSet propose(const Tensor& objectness, const Tensor& deltas, std::span<const Box> anchors,
                    std::size_t image_width, std::size_t image_height,
                    const DetectorConfig& config, std::size_t top_k) {
  const auto& os = objectness.shape();
  if (os.size() != 4 || os[0] != 1 || os[1] != kAnchorsPerCell) {
    throw ShapeError("propose: objectness must be [1, 9, H, W], got " + shape_str(os));
  }
  const std::size_t h = os[2], w = os[3], hw = h * w;
  if (deltas.shape() != Shape{1, 4 * kAnchorsPerCell, h, w}) {
    throw ShapeError("propose: deltas must be [1, 36, H, W], got " + shape_str(deltas.shape()));
  }
  if (anchors.size() != kAnchorsPerCell * hw) {
    throw ShapeError("propose: " + std::to_string(anchors.size()) + " anchors for " +
                     std::to_string(kAnchorsPerCell * hw) + " objectness cells");
  }
  const auto& bw = config.box_weights;
  std::vector<ScoredBox> cand;
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    const std::size_t cell = a / kAnchorsPerCell, k = a % kAnchorsPerCell;
    const double* d = deltas.ptr() + k * 4 * hw + cell;
    const BoxDelta delta{d[0] / bw[0], d[hw] / bw[1], d[2 * hw] / bw[2], d[3 * hw] / bw[3]};
    const auto clipped = clip_to_image(decode_box(delta, anchors[a]), double(image_width),
                                       double(image_height));
    if (!clipped || clipped->width() < config.min_proposal_side ||
        clipped->height() < config.min_proposal_side) {
      continue;
    }
    cand.push_back({*clipped, sigmoid(objectness[k * hw + cell]), ""});
  }
  std::stable_sort(cand.begin(), cand.end(),
                   [](const ScoredBox& x, const ScoredBox& y) { return x.score > y.score; });
  if (cand.size() > config.pre_nms_top_k) cand.resize(config.pre_nms_top_k);
  ProposalSet out;
  for (auto i : nms_indices(cand, config.nms_score_threshold, config.nms_iou_threshold)) {
    if (out.boxes.size() == top_k) break;
    out.boxes.push_back(cand[i].box);
    out.objectness.push_back(cand[i].score);
  }
  return out;
}

Var roi_feature(const Var& features, const Box& proposal, std::size_t size, double spatial_scale) {
  if (!proposal.valid()) throw ShapeError("roi_feature: proposal has no area");
  const ops::Region r = proposal.as_array();
  Var y = ops::roi_align(features, std::span<const ops::Region>(&r, 1), size, spatial_scale);
  return ops::reshape(y, {features.shape()[1], size, size});
}

Detector::Detector(DetectorConfig config, std::uint64_t seed, Init init)
    : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  std::size_t in = 3;
  for (std::size_t b = 0; b < config_.backbone_channels.size(); ++b) {
    const std::size_t c = config_.backbone_channels[b];
    const std::string name = "det.block" + std::to_string(b);
    convs_.emplace_back(params_, name + ".0", in, c, 3, rng, init);
    convs_.emplace_back(params_, name + ".1", c, c, 3, rng, init);
    in = c;
  }
  const std::size_t a = kAnchorsPerCell;
  rpn_conv_ = std::make_unique<Conv2d>(params_, "det.rpn.conv", in, config_.rpn_channels, 3, rng, init);
  rpn_obj_ = std::make_unique<Conv2d>(params_, "det.rpn.objectness", config_.rpn_channels, a, 1, rng, init);
  rpn_delta_ = std::make_unique<Conv2d>(params_, "det.rpn.deltas", config_.rpn_channels, 4 * a, 1, rng, init);
  std::size_t roi_channels = in;
  if (config_.backbone_channels.size() > 1) roi_channels += config_.backbone_channels.end()[-2];
  const std::size_t s = config_.roi_output_size;
  const std::size_t k = config_.classes.size();
  fc_ = std::make_unique<Linear>(params_, "det.head.fc", roi_channels * s * s, config_.head_hidden, rng, init);
  cls_ = std::make_unique<Linear>(params_, "det.head.cls", config_.head_hidden, k + 1, rng, init);
  reg_ = std::make_unique<Linear>(params_, "det.head.reg", config_.head_hidden, 4 * k, rng, Init::kZeros);
}

std::vector<Var> Detector::backbone_forward(const Var& image) const {
  const auto& s = image.shape();
  if (s.size() != 4 || s[1] != 3) throw ShapeError("detector input must be [N, 3, H, W], got " + shape_str(s));
  const std::size_t stride = config_.stride();
  if (s[2] % stride != 0 || s[3] % stride != 0) {
    throw ShapeError("detector input " + std::to_string(s[2]) + "x" + std::to_string(s[3]) +
                     " must be divisible by the backbone stride " + std::to_string(stride));
  }
  std::vector<Var> levels;
  Var x = image;
  for (std::size_t b = 0; b < config_.backbone_channels.size(); ++b) {
    x = ops::relu(convs_[2 * b](x));
    x = ops::relu(convs_[2 * b + 1](x));
    x = ops::maxpool2x2(x);
    levels.push_back(x);
  }
  return levels;
}

RpnOutput Detector::rpn_forward(const Var& features) const {
  Var t = ops::relu((*rpn_conv_)(features));
  return {(*rpn_obj_)(t), (*rpn_delta_)(t)};
}

HeadOutput Detector::head_forward(const std::vector<Var>& levels,
                                  std::span<const Box> regions) const {
  std::vector<ops::Region> r;
  r.reserve(regions.size());
  for (const auto& b : regions) r.push_back(context_region(b, config_.roi_context));
  const std::size_t s = config_.roi_output_size;
  const std::size_t n = levels.size();
  const double coarse_scale = 1.0 / double(config_.stride());
  Var pooled = ops::roi_align(levels[n - 1], r, s, coarse_scale);
  if (n > 1) pooled = ops::concat_channels(pooled, ops::roi_align(levels[n - 2], r, s, 2 * coarse_scale));
  const std::size_t k = regions.size();
  Var flat = ops::reshape(pooled, {k, pooled.value().numel() / k});
  Var hidden = ops::relu((*fc_)(flat));
  return {(*cls_)(hidden), (*reg_)(hidden)};
}

std::vector<Box> Detector::anchors_for(std::size_t feature_height, std::size_t feature_width) const {
  return generate_anchors(config_.anchors, feature_height, feature_width);
}

BoxDelta Detector::weighted(const BoxDelta& d) const {
  const auto& w = config_.box_weights;
  return {d.tx * w[0], d.ty * w[1], d.tw * w[2], d.th * w[3]};
}

BoxDelta Detector::unweighted(const double* raw) const {
  const auto& w = config_.box_weights;
  return {raw[0] / w[0], raw[1] / w[1], raw[2] / w[2], raw[3] / w[3]};
}

Var Detector::image_loss(const Var& image, std::span<const Box> truths,
                         std::span<const std::size_t> labels, std::mt19937_64& rng,
                         const std::vector<Box>* fixed_proposals) const {
  if (truths.size() != labels.size()) throw ShapeError("image_loss: one label per truth box required");
  for (auto l : labels) {
    if (l >= config_.classes.size()) throw ShapeError("image_loss: class label out of range");
  }
  const std::size_t img_h = image.shape()[2], img_w = image.shape()[3];
  const auto levels = backbone_forward(image);
  const Var& feat = levels.back();
  const std::size_t fh = feat.shape()[2], fw = feat.shape()[3], hw = fh * fw;
  const auto rpn = rpn_forward(feat);
  const auto anchors = anchors_for(fh, fw);

  // RPN objectness and box regression over a sampled anchor batch.
  auto targets = assign_rpn_targets(anchors, truths, config_);
  sample_rpn_batch(targets, config_.rpn_batch, rng);
  std::vector<std::size_t> obj_idx, pos_idx;
  std::vector<double> obj_target, pos_target;
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    if (targets.labels[a] == AnchorLabel::kIgnore) continue;
    const std::size_t cell = a / kAnchorsPerCell, k = a % kAnchorsPerCell;
    obj_idx.push_back(k * hw + cell);
    obj_target.push_back(targets.labels[a] == AnchorLabel::kPositive ? 1.0 : 0.0);
    if (targets.labels[a] == AnchorLabel::kPositive) {
      const auto d = weighted(targets.deltas[a]);
      const double dv[4] = {d.tx, d.ty, d.tw, d.th};
      for (std::size_t j = 0; j < 4; ++j) {
        pos_idx.push_back((4 * k + j) * hw + cell);
        pos_target.push_back(dv[j]);
      }
    }
  }
  const double rpn_norm = double(obj_idx.size());
  Var loss = ops::sigmoid_bce(ops::gather(rpn.objectness, obj_idx),
                              Tensor({obj_target.size()}, obj_target));
  if (!pos_idx.empty()) {
    loss = ops::add(loss, ops::smooth_l1(ops::gather(rpn.deltas, pos_idx),
                                         Tensor({pos_target.size()}, pos_target), 1.0 / 9.0, rpn_norm));
  }
  loss = ops::scale(loss, config_.rpn_loss_weight);

  // Head regions: proposals, truths and jittered truths.
  std::vector<Box> regions;
  if (fixed_proposals) {
    regions = *fixed_proposals;
  } else {
    NoGradGuard guard;
    regions = propose(rpn.objectness.value(), rpn.deltas.value(), anchors, img_w, img_h, config_,
                      config_.train_proposal_top_k)
                  .boxes;
  }
  regions.insert(regions.end(), truths.begin(), truths.end());
  std::normal_distribution<double> noise(0.0, config_.train.jitter_sigma);
  for (std::size_t c = 0; c < config_.train.jitter_copies; ++c) {
    for (const auto& t : truths) {
      const double w = t.width(), h = t.height();
      Box j{t.x_min + noise(rng) * w, t.y_min + noise(rng) * h, t.x_max + noise(rng) * w,
            t.y_max + noise(rng) * h};
      if (j.valid()) regions.push_back(j);
    }
  }
  std::vector<std::size_t> pos, neg, match(regions.size(), 0);
  for (std::size_t r = 0; r < regions.size(); ++r) {
    double best = 0.0;
    for (std::size_t j = 0; j < truths.size(); ++j) {
      const double v = iou(regions[r], truths[j]);
      if (v > best) {
        best = v;
        match[r] = j;
      }
    }
    (best >= config_.head_positive_iou ? pos : neg).push_back(r);
  }
  take_random(pos, std::min(config_.head_max_positives, config_.head_batch), rng);
  take_random(neg, config_.head_batch - pos.size(), rng);
  std::vector<Box> picked;
  std::vector<int> cls_target;
  std::vector<std::size_t> reg_idx;
  std::vector<double> reg_target;
  const std::size_t ncls = config_.classes.size();
  for (auto r : pos) {
    const std::size_t row = picked.size();
    const std::size_t c = labels[match[r]];
    picked.push_back(regions[r]);
    cls_target.push_back(static_cast<int>(c + 1));
    const auto d = weighted(encode_box(truths[match[r]], regions[r]));
    const double dv[4] = {d.tx, d.ty, d.tw, d.th};
    for (std::size_t j = 0; j < 4; ++j) {
      reg_idx.push_back(row * 4 * ncls + 4 * c + j);
      reg_target.push_back(dv[j]);
    }
  }
  for (auto r : neg) {
    picked.push_back(regions[r]);
    cls_target.push_back(0);
  }
  if (picked.empty()) return loss;
  const auto head = head_forward(levels, picked);
  Var head_loss = ops::softmax_cross_entropy(head.class_logits, cls_target);
  if (!reg_idx.empty()) {
    head_loss = ops::add(head_loss, ops::smooth_l1(ops::gather(head.box_deltas, reg_idx),
                                                   Tensor({reg_target.size()}, reg_target),
                                                   1.0 / 9.0, double(picked.size())));
  }
  return ops::add(loss, ops::scale(head_loss, config_.head_loss_weight));
}

std::vector<Detection> Detector::detect(const Image& image) const {
  if (!trained_) throw TrainingError("detect: detector weights are not trained or loaded");
  NoGradGuard guard;
  const Var x(image_to_tensor(image));
  const auto levels = backbone_forward(x);
  const Var& feat = levels.back();
  const auto rpn = rpn_forward(feat);
  const auto anchors = anchors_for(feat.shape()[2], feat.shape()[3]);
  const auto proposals = propose(rpn.objectness.value(), rpn.deltas.value(), anchors, image.width,
                                 image.height, config_, config_.proposal_top_k);
  if (proposals.boxes.empty()) return {};
  const double iw = double(image.width), ih = double(image.height);
  const std::size_t ncls = config_.classes.size();
  std::vector<Box> boxes = proposals.boxes;
  HeadOutput head;
  for (std::size_t it = 0;; ++it) {
    head = head_forward(levels, boxes);
    if (it + 1 == config_.refine_iterations) break;
    const Tensor probs = ops::softmax_rows(head.class_logits.value());
    for (std::size_t r = 0; r < boxes.size(); ++r) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < ncls; ++c) {
        if (probs[r * (ncls + 1) + c + 1] > probs[r * (ncls + 1) + best + 1]) best = c;
      }
      const auto moved = clip_to_image(
          decode_box(unweighted(head.box_deltas.value().ptr() + r * 4 * ncls + 4 * best), boxes[r]),
          iw, ih);
      if (moved && moved->width() >= config_.min_proposal_side &&
          moved->height() >= config_.min_proposal_side) {
        boxes[r] = *moved;
      }
    }
  }
  const Tensor probs = ops::softmax_rows(head.class_logits.value());
  std::vector<Detection> out;
  for (std::size_t c = 0; c < ncls; ++c) {
    std::vector<ScoredBox> cand;
    std::vector<std::size_t> source;
    for (std::size_t r = 0; r < boxes.size(); ++r) {
      const double score = probs[r * (ncls + 1) + c + 1];
      if (score < config_.detect_score_threshold) continue;
      const auto b = clip_to_image(
          decode_box(unweighted(head.box_deltas.value().ptr() + r * 4 * ncls + 4 * c), boxes[r]),
          iw, ih);
      if (!b) continue;
      cand.push_back({*b, score, config_.classes[c]});
      source.push_back(r);
    }
    for (auto i : nms_indices(cand, 0.0, config_.final_nms_iou_threshold)) {
      out.push_back({cand[i], source[i]});
    }
  }
  return out;
}

std::vector<NamedTensor> Detector::state() const {
  auto out = export_state(params_, {});
  out.push_back({"det.meta.trained", Tensor({1}, trained_ ? 1.0 : 0.0)});
  return out;
}

std::unique_ptr<Detector> Detector::from_state(std::span<const NamedTensor> entries,
                                               const DetectorConfig& config) {
  auto det = std::make_unique<Detector>(config, 0, Init::kZeros);
  std::deque<BatchNorm2d> none;
  import_state(entries, det->params_, none);
  const auto* trained = find_entry(entries, "det.meta.trained");
  det->trained_ = trained && trained->value[0] != 0.0;
  return det;
}

LossCurve train_detector(Detector& detector, std::span<const DetSample> samples,
                         const DetTrainConfig& config) {
  if (samples.empty()) throw TrainingError("train_detector: empty corpus");
  if (std::none_of(samples.begin(), samples.end(), [](const DetSample& s) { return !s.boxes.empty(); })) {
    throw TrainingError("train_detector: corpus has no box annotations");
  }
  if (config.batch_size == 0) throw ConfigError("batch_size must be positive");
  config.optimizer.validate();
  std::mt19937_64 rng(config.seed);
  Optimizer opt(config.optimizer);
  const std::size_t drop_at =
      static_cast<std::size_t>(std::ceil(config.lr_drop_fraction * double(config.max_steps)));
  LossCurve curve;
  for (std::size_t step = 0; step < config.max_steps; ++step) {
    if (step == drop_at && config.lr_drop_fraction < 1.0) {
      opt.set_learning_rate(0.1 * config.optimizer.learning_rate);
    }
    detector.parameters().zero_grad();
    Var total;
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const auto& s = samples[std::uniform_int_distribution<std::size_t>(0, samples.size() - 1)(rng)];
      Var l = detector.image_loss(Var(image_to_tensor(s.image)), s.boxes, s.labels, rng);
      total = total.defined() ? ops::add(total, l) : l;
    }
    total = ops::scale(total, 1.0 / double(config.batch_size));
    const double v = total.value()[0];
    if (!std::isfinite(v)) {
      throw TrainingError("train_detector: non-finite loss at step " + std::to_string(step));
    }
    total.backward();
    opt.step(detector.parameters());
    curve.points.emplace_back(step, v);
  }
  detector.mark_trained();
  return curve;
}

}  // namespace insloc
