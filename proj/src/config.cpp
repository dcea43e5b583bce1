/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include "insloc/config.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "insloc/error.hpp"

namespace insloc {

namespace {

struct Field {
  std::string key;
  std::function<void(std::string_view)> set;
  std::function<std::string()> get;
};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_list(std::string_view v) {
  std::vector<std::string_view> out;
  while (true) {
    const auto comma = v.find(',');
    out.push_back(trim(v.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

double to_double(std::string_view v) {
  double x = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw ConfigError("expected a number");
  return x;
}

std::uint64_t to_uint(std::string_view v) {
  std::uint64_t x = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError("expected a non-negative integer");
  }
  return x;
}

bool to_bool(std::string_view v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("expected true or false");
}

std::string fmt(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

template <class Range>
std::string join(const Range& items) {
  std::string out;
  for (const auto& v : items) {
    if (!out.empty()) out += ", ";
    if constexpr (std::is_floating_point_v<std::decay_t<decltype(v)>>) {
      out += fmt(v);
    } else {
      out += std::to_string(v);
    }
  }
  return out;
}

class Binder {
 public:
  void size(std::string key, std::size_t& f) {
    add(std::move(key), [&f](std::string_view v) { f = to_uint(v); },
        [&f] { return std::to_string(f); });
  }
  void real(std::string key, double& f) {
    add(std::move(key), [&f](std::string_view v) { f = to_double(v); }, [&f] { return fmt(f); });
  }
  void flag(std::string key, bool& f) {
    add(std::move(key), [&f](std::string_view v) { f = to_bool(v); },
        [&f] { return std::string(f ? "true" : "false"); });
  }
  void sizes(std::string key, std::vector<std::size_t>& f) {
    add(std::move(key),
        [&f](std::string_view v) {
          f.clear();
          for (auto item : split_list(v)) f.push_back(to_uint(item));
        },
        [&f] { return join(f); });
  }
  template <std::size_t N>
  void reals(std::string key, std::array<double, N>& f) {
    add(std::move(key),
        [&f](std::string_view v) {
          const auto items = split_list(v);
          if (items.size() != N) throw ConfigError("expected " + std::to_string(N) + " values");
          for (std::size_t i = 0; i < N; ++i) f[i] = to_double(items[i]);
        },
        [&f] { return join(f); });
  }
  void optimizer(const std::string& prefix, OptimizerConfig& o) {
    add(prefix + ".optimizer",
        [&o](std::string_view v) {
          if (v == "adam") {
            o.kind = OptimizerKind::kAdam;
          } else if (v == "momentum") {
            o.kind = OptimizerKind::kMomentum;
          } else {
            throw ConfigError("expected adam or momentum");
          }
        },
        [&o] { return std::string(o.kind == OptimizerKind::kAdam ? "adam" : "momentum"); });
    real(prefix + ".learning_rate", o.learning_rate);
    real(prefix + ".momentum", o.momentum_mu);
    real(prefix + ".adam_beta1", o.adam_beta1);
    real(prefix + ".adam_beta2", o.adam_beta2);
    real(prefix + ".adam_epsilon", o.adam_epsilon);
  }
  void seg_train(const std::string& prefix, SegTrainConfig& s) {
    optimizer(prefix, s.optimizer);
    size(prefix + ".steps", s.steps);
    flag(prefix + ".augment", s.augment);
    real(prefix + ".broken_weight", s.broken_weight);
    size(prefix + ".window", s.window);
  }

  std::vector<Field> fields;

 private:
  void add(std::string key, std::function<void(std::string_view)> set,
           std::function<std::string()> get) {
    fields.push_back({std::move(key), std::move(set), std::move(get)});
  }
};

std::vector<Field> bind(RunConfig& c) {
  Binder b;
  auto& g = c.generator;
  b.size("generator.image_size", g.image_size);
  b.size("generator.strings_min", g.strings_min);
  b.size("generator.strings_max", g.strings_max);
  b.size("generator.disc_count_min", g.disc_count_min);
  b.size("generator.disc_count_max", g.disc_count_max);
  b.real("generator.disc_radius_min", g.disc_radius_min);
  b.real("generator.disc_radius_max", g.disc_radius_max);
  b.size("generator.clutter_min", g.clutter_min);
  b.size("generator.clutter_max", g.clutter_max);
  b.size("generator.missing_max", g.missing_max);
  b.real("generator.extra_broken_probability", g.extra_broken_probability);
  b.real("generator.noise_sigma", g.noise_sigma);
  b.size("corpus.size", c.corpus_size);
  b.real("corpus.positive_fraction", c.positive_fraction);

  auto& d = c.detector;
  b.sizes("detector.backbone_channels", d.backbone_channels);
  b.size("detector.rpn_channels", d.rpn_channels);
  b.reals("detector.anchor_sizes", d.anchors.sizes);
  b.reals("detector.anchor_ratios", d.anchors.ratios);
  b.size("detector.anchor_stride", d.anchors.stride);
  b.size("detector.pre_nms_top_k", d.pre_nms_top_k);
  b.size("detector.proposal_top_k", d.proposal_top_k);
  b.size("detector.train_proposal_top_k", d.train_proposal_top_k);
  b.real("detector.nms_score_threshold", d.nms_score_threshold);
  b.real("detector.nms_iou_threshold", d.nms_iou_threshold);
  b.real("detector.min_proposal_side", d.min_proposal_side);
  b.size("detector.roi_output_size", d.roi_output_size);
  b.real("detector.roi_context", d.roi_context);
  b.size("detector.head_hidden", d.head_hidden);
  b.real("detector.rpn_positive_iou", d.rpn_positive_iou);
  b.real("detector.rpn_negative_iou", d.rpn_negative_iou);
  b.size("detector.rpn_batch", d.rpn_batch);
  b.size("detector.head_batch", d.head_batch);
  b.size("detector.head_max_positives", d.head_max_positives);
  b.real("detector.head_positive_iou", d.head_positive_iou);
  b.real("detector.rpn_loss_weight", d.rpn_loss_weight);
  b.real("detector.head_loss_weight", d.head_loss_weight);
  b.reals("detector.box_weights", d.box_weights);
  b.size("detector.refine_iterations", d.refine_iterations);
  b.real("detector.detect_score_threshold", d.detect_score_threshold);
  b.real("detector.final_nms_iou_threshold", d.final_nms_iou_threshold);
  b.optimizer("detector.train", d.train.optimizer);
  b.size("detector.train.batch_size", d.train.batch_size);
  b.size("detector.train.max_steps", d.train.max_steps);
  b.real("detector.train.lr_drop_fraction", d.train.lr_drop_fraction);
  b.size("detector.train.jitter_copies", d.train.jitter_copies);
  b.real("detector.train.jitter_sigma", d.train.jitter_sigma);

  b.size("unet.depth", c.unet.depth);
  b.size("unet.base_channels", c.unet.base_channels);
  b.flag("unet.use_batchnorm", c.unet.use_batchnorm);
  b.seg_train("segmenter", c.segmenter);
  b.seg_train("full_segmenter", c.full_segmenter);

  b.real("cascade.margin_fraction", c.cascade.margin_fraction);
  b.size("cascade.min_region_pixels", c.cascade.min_region_pixels);
  b.real("cascade.mask_threshold", c.cascade.mask_threshold);

  b.real("eval.overlap_threshold", c.overlap_threshold);
  b.size("eval.detection_folds", c.detection_folds);
  b.size("eval.segmentation_folds", c.segmentation_folds);
  b.size("eval.fold", c.fold);
  b.sizes("sweep.sizes", c.sweep_sizes);
  b.size("sweep.eval_size", c.sweep_eval_size);
  b.size("bench.warmup", c.bench_warmup);
  return std::move(b.fields);
}

}  // namespace

RunConfig::RunConfig() {
  full_segmenter.window = 128;
}

void RunConfig::validate() const {
  generator.validate();
  detector.validate();
  unet.validate();
  segmenter.validate();
  full_segmenter.validate();
  cascade.validate();
  if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0)) {
    throw ConfigError("corpus.positive_fraction must be in [0, 1]");
  }
  if (!(overlap_threshold > 0.0 && overlap_threshold <= 1.0)) {
    throw ConfigError("eval.overlap_threshold must be in (0, 1]");
  }
  if (detection_folds < 2 || segmentation_folds < 2) throw ConfigError("fold counts must be >= 2");
  if (fold >= detection_folds) throw ConfigError("eval.fold must be below eval.detection_folds");
  for (std::size_t i = 1; i < sweep_sizes.size(); ++i) {
    if (sweep_sizes[i] <= sweep_sizes[i - 1]) throw ConfigError("sweep.sizes must be strictly increasing");
  }
  if (!sweep_sizes.empty() && sweep_sizes.front() == 0) throw ConfigError("sweep.sizes must be positive");
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig c;
  auto fields = bind(c);
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string raw;
  for (std::size_t line_no = 1; std::getline(in, raw); ++line_no) {
    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const auto value = trim(line.substr(eq + 1));
    const auto it = std::find_if(fields.begin(), fields.end(), [&](const Field& f) { return f.key == key; });
    if (it == fields.end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "repeated key '" + key + "'");
    try {
      it->set(value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  try {
    return parse_run_config(s.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string run_config_to_text(const RunConfig& config) {
  RunConfig copy = config;
  std::string out;
  for (const auto& f : bind(copy)) out += f.key + " = " + f.get() + "\n";
  return out;
}

std::vector<std::string> run_config_keys() {
  RunConfig c;
  std::vector<std::string> out;
  for (const auto& f : bind(c)) out.push_back(f.key);
  return out;
}

}  // namespace insloc
