/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include "insloc/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <json.hpp>
#include <sstream>

#include "insloc/error.hpp"

namespace insloc {

namespace {

using ojson = nlohmann::ordered_json;

ojson optional_json(const std::optional<double>& v) { return v ? ojson(*v) : ojson(); }

std::optional<double> optional_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

ojson pr_json(const PRResult& r) {
  return ojson{{"precision", optional_json(r.precision)},
               {"recall", optional_json(r.recall)},
               {"tp", r.counts.tp},
               {"fp", r.counts.fp},
               {"fn", r.counts.fn}};
}

PRResult pr_from(const nlohmann::json& j) {
  PRResult r;
  r.counts = {j.at("tp").get<std::size_t>(), j.at("fp").get<std::size_t>(),
              j.at("fn").get<std::size_t>()};
  r.precision = optional_from(j.at("precision"));
  r.recall = optional_from(j.at("recall"));
  return r;
}

std::string fmt(const std::optional<double>& v) {
  if (!v) return "";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, *v);
  return std::string(buf, r.ptr);
}

std::optional<double> parse_optional(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double x = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw FormatError("bad number '" + s + "'");
  return x;
}

std::size_t parse_count(const std::string& s) {
  std::size_t x = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw FormatError("bad count '" + s + "'");
  return x;
}

void require_nonempty(std::span<const CorpusSample> corpus, const char* what) {
  if (corpus.empty()) throw Error(std::string(what) + ": empty corpus");
}

std::pair<std::optional<double>, std::optional<double>> mean_and_spread(
    const std::vector<double>& xs) {
  if (xs.empty()) return {std::nullopt, std::nullopt};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= double(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / double(xs.size()))};
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t seed, SeedStream stream, std::uint64_t offset) {
  return derive_seed(seed, static_cast<std::uint64_t>(stream) + offset);
}

std::vector<CorpusSample> select_samples(std::span<const CorpusSample> corpus,
                                         std::span<const std::size_t> indices) {
  std::vector<CorpusSample> out;
  out.reserve(indices.size());
  for (auto i : indices) {
    if (i >= corpus.size()) throw Error("select_samples: index out of range");
    out.push_back(corpus[i]);
  }
  return out;
}

FoldSplit corpus_split(std::span<const CorpusSample> corpus, std::size_t folds, std::size_t fold,
                       std::uint64_t seed) {
  std::vector<bool> positive;
  for (const auto& s : corpus) positive.push_back(s.annotation.is_positive);
  return split_kfold(positive, folds, fold, seed);
}

std::vector<DetSample> detection_samples(std::span<const CorpusSample> corpus, bool with_breaks) {
  std::vector<DetSample> out;
  for (const auto& s : corpus) {
    DetSample d{s.image, s.annotation.boxes, std::vector<std::size_t>(s.annotation.boxes.size(), 0)};
    if (with_breaks) {
      for (const auto& fp : true_footprints(s.mask)) {
        d.boxes.push_back(make_region(fp, 0).bbox);
        d.labels.push_back(1);
      }
    }
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<SegSample> crop_samples(std::span<const CorpusSample> corpus,
                                    const CascadeConfig& cascade, std::size_t depth) {
  std::vector<SegSample> out;
  for (const auto& s : corpus) {
    for (const auto& b : s.annotation.boxes) {
      out.push_back({crop_and_normalize(s.image, b, cascade.margin_fraction, depth).crop_image,
                     crop_and_normalize(s.mask, b, cascade.margin_fraction, depth).crop_image});
    }
  }
  return out;
}

std::vector<SegSample> full_image_samples(std::span<const CorpusSample> corpus) {
  std::vector<SegSample> out;
  for (const auto& s : corpus) out.push_back({s.image, s.mask});
  return out;
}

DetectorConfig break_detector_config(const DetectorConfig& strings) {
  DetectorConfig c = strings;
  c.classes = {"insulator", "broken_disc"};
  c.anchors.sizes[0] = 16.0;
  return c;
}

namespace {

TrainedDetector train_detector_with(std::span<const CorpusSample> corpus, DetectorConfig det_cfg,
                                    bool with_breaks, std::uint64_t init_seed,
                                    std::uint64_t train_seed) {
  TrainedDetector out;
  det_cfg.train.seed = train_seed;
  out.model = std::make_unique<Detector>(det_cfg, init_seed);
  const auto samples = detection_samples(corpus, with_breaks);
  out.curve = train_detector(*out.model, samples, det_cfg.train);
  return out;
}

TrainedSegmenter train_segmenter_with(const std::vector<SegSample>& samples, const UNetConfig& unet,
                                      SegTrainConfig train, std::uint64_t init_seed,
                                      std::uint64_t train_seed) {
  TrainedSegmenter out;
  train.seed = train_seed;
  out.model = std::make_unique<UNet>(unet, init_seed);
  out.curve = train_segmenter(*out.model, samples, train);
  return out;
}

}  // namespace

TrainedDetector train_string_detector(std::span<const CorpusSample> corpus, const RunConfig& config,
                                      std::uint64_t seed) {
  return train_detector_with(corpus, config.detector, false,
                             stream_seed(seed, SeedStream::kStringDetectorInit),
                             stream_seed(seed, SeedStream::kStringDetectorTrain));
}

TrainedDetector train_break_detector(std::span<const CorpusSample> corpus, const RunConfig& config,
                                     std::uint64_t seed) {
  return train_detector_with(corpus, break_detector_config(config.detector), true,
                             stream_seed(seed, SeedStream::kBreakDetectorInit),
                             stream_seed(seed, SeedStream::kBreakDetectorTrain));
}

TrainedSegmenter train_crop_segmenter(std::span<const CorpusSample> corpus, const RunConfig& config,
                                      std::uint64_t seed) {
  return train_segmenter_with(crop_samples(corpus, config.cascade, config.unet.depth), config.unet,
                              config.segmenter, stream_seed(seed, SeedStream::kCropSegmenterInit),
                              stream_seed(seed, SeedStream::kCropSegmenterTrain));
}

TrainedSegmenter train_full_segmenter(std::span<const CorpusSample> corpus, const RunConfig& config,
                                      std::uint64_t seed) {
  return train_segmenter_with(full_image_samples(corpus), config.unet, config.full_segmenter,
                              stream_seed(seed, SeedStream::kFullSegmenterInit),
                              stream_seed(seed, SeedStream::kFullSegmenterTrain));
}

std::vector<std::vector<ScoredBox>> detect_corpus(const Detector& detector,
                                                  std::span<const CorpusSample> corpus) {
  std::vector<std::vector<ScoredBox>> out(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    for (const auto& d : detector.detect(corpus[i].image)) {
      if (d.scored_box.class_label == detector.config().classes.front()) out[i].push_back(d.scored_box);
    }
  }
  return out;
}

PRResult evaluate_detector(const Detector& detector, std::span<const CorpusSample> corpus,
                           double overlap_threshold) {
  require_nonempty(corpus, "evaluate_detector");
  std::vector<std::vector<Box>> truths;
  for (const auto& s : corpus) truths.push_back(s.annotation.boxes);
  return evaluate_detection(detect_corpus(detector, corpus), truths, overlap_threshold);
}

PRResult run_ablation(std::span<const CorpusSample> corpus, const AblationModels& models,
                      AblationMode mode, const CascadeConfig& cascade) {
  require_nonempty(corpus, "run_ablation");
  std::vector<std::vector<BreakRegion>> regions;
  std::vector<Image> masks;
  for (const auto& s : corpus) {
    regions.push_back(locate_breaks(s.image, models, mode, cascade));
    masks.push_back(s.mask);
  }
  return evaluate_location(regions, masks);
}

PRResult evaluate_segmenter_on_truth(UNet& segmenter, std::span<const CorpusSample> corpus,
                                     const CascadeConfig& cascade) {
  require_nonempty(corpus, "evaluate_segmenter_on_truth");
  std::vector<std::vector<BreakRegion>> regions;
  std::vector<Image> masks;
  for (const auto& s : corpus) {
    std::vector<ScoredBox> boxes;
    for (const auto& b : s.annotation.boxes) boxes.push_back({b, 1.0, "insulator"});
    regions.push_back(locate_in_boxes(s.image, boxes, segmenter, cascade).breaks);
    masks.push_back(s.mask);
  }
  return evaluate_location(regions, masks);
}

CrossvalProtocol parse_crossval_protocol(std::string_view name) {
  if (name == "detection") return CrossvalProtocol::kDetection;
  if (name == "segmentation") return CrossvalProtocol::kSegmentation;
  throw ConfigError("unknown protocol '" + std::string(name) + "' (expected detection or segmentation)");
}

std::string_view crossval_protocol_name(CrossvalProtocol protocol) {
  return protocol == CrossvalProtocol::kDetection ? "detection" : "segmentation";
}

CrossvalResult aggregate_folds(CrossvalProtocol protocol, std::vector<PRResult> folds) {
  CrossvalResult r;
  r.protocol = protocol;
  std::vector<double> ps, rs;
  for (const auto& f : folds) {
    if (f.precision) ps.push_back(*f.precision);
    if (f.recall) rs.push_back(*f.recall);
  }
  std::tie(r.mean_precision, r.precision_spread) = mean_and_spread(ps);
  std::tie(r.mean_recall, r.recall_spread) = mean_and_spread(rs);
  r.folds = std::move(folds);
  return r;
}

CrossvalResult crossval(std::span<const CorpusSample> corpus, CrossvalProtocol protocol,
                        const RunConfig& config, std::uint64_t seed) {
  const std::size_t k = protocol == CrossvalProtocol::kDetection ? config.detection_folds
                                                                   : config.segmentation_folds;
  if (corpus.size() < k) {
    throw Error("crossval: " + std::to_string(corpus.size()) + " samples for " + std::to_string(k) +
                " folds");
  }
  std::vector<PRResult> folds;
  for (std::size_t f = 0; f < k; ++f) {
    const auto split = corpus_split(corpus, k, f, seed);
    const auto train = select_samples(corpus, split.train);
    const auto test = select_samples(corpus, split.test);
    const std::uint64_t fold_seed = derive_seed(seed, f);
    try {
      if (protocol == CrossvalProtocol::kDetection) {
        const auto det = train_string_detector(train, config, fold_seed);
        folds.push_back(evaluate_detector(*det.model, test, config.overlap_threshold));
      } else {
        auto seg = train_crop_segmenter(train, config, fold_seed);
        folds.push_back(evaluate_segmenter_on_truth(*seg.model, test, config.cascade));
      }
    } catch (const TrainingError& e) {
      throw TrainingError("fold " + std::to_string(f) + ": " + e.what());
    }
  }
  return aggregate_folds(protocol, std::move(folds));
}

std::string crossval_to_json(const CrossvalResult& r) {
  ojson j;
  j["protocol"] = std::string(crossval_protocol_name(r.protocol));
  j["k"] = r.folds.size();
  j["folds"] = ojson::array();
  for (const auto& f : r.folds) j["folds"].push_back(pr_json(f));
  j["mean_precision"] = optional_json(r.mean_precision);
  j["mean_recall"] = optional_json(r.mean_recall);
  j["precision_spread"] = optional_json(r.precision_spread);
  j["recall_spread"] = optional_json(r.recall_spread);
  return j.dump(2) + "\n";
}

CrossvalResult crossval_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    CrossvalResult r;
    r.protocol = parse_crossval_protocol(j.at("protocol").get<std::string>());
    for (const auto& f : j.at("folds")) r.folds.push_back(pr_from(f));
    r.mean_precision = optional_from(j.at("mean_precision"));
    r.mean_recall = optional_from(j.at("mean_recall"));
    r.precision_spread = optional_from(j.at("precision_spread"));
    r.recall_spread = optional_from(j.at("recall_spread"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("crossval JSON: ") + e.what());
  }
}

SweepResult sweep_training_size(const RunConfig& config, std::uint64_t seed,
                                const std::function<void(const SweepPoint&)>& progress) {
  config.validate();
  if (config.sweep_sizes.empty()) throw ConfigError("sweep.sizes is empty");
  const auto eval = generate_corpus(config.sweep_eval_size, config.positive_fraction,
                                    config.generator, stream_seed(seed, SeedStream::kSweepEvalCorpus));
  SweepResult result;
  result.seed = seed;
  for (std::size_t size : config.sweep_sizes) {
    const auto train = generate_corpus(size, config.positive_fraction, config.generator,
                                       stream_seed(seed, SeedStream::kSweepCorpus, size));
    const auto det = train_string_detector(train, config, seed);
    auto seg = train_crop_segmenter(train, config, seed);
    AblationModels models;
    models.string_detector = det.model.get();
    models.crop_segmenter = seg.model.get();
    SweepPoint p{size, evaluate_detector(*det.model, eval, config.overlap_threshold),
                 run_ablation(eval, models, AblationMode::kCascade, config.cascade)};
    if (progress) progress(p);
    result.points.push_back(p);
  }
  return result;
}

std::string sweep_to_csv(const SweepResult& r) {
  std::ostringstream out;
  out << "# seed " << r.seed << '\n';
  out << "training_size,det_precision,det_recall,det_tp,det_fp,det_fn,"
         "loc_precision,loc_recall,loc_tp,loc_fp,loc_fn\n";
  for (const auto& p : r.points) {
    out << p.training_size;
    for (const PRResult* pr : {&p.detection, &p.location}) {
      out << ',' << fmt(pr->precision) << ',' << fmt(pr->recall) << ',' << pr->counts.tp << ','
          << pr->counts.fp << ',' << pr->counts.fn;
    }
    out << '\n';
  }
  return out.str();
}

SweepResult sweep_from_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  SweepResult r;
  if (!std::getline(in, line) || line.rfind("# seed ", 0) != 0) throw FormatError("sweep CSV: missing seed line");
  r.seed = parse_count(line.substr(7));
  if (!std::getline(in, line) || line.rfind("training_size,", 0) != 0) {
    throw FormatError("sweep CSV: missing header");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream row(line);
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 11) throw FormatError("sweep CSV: expected 11 columns in '" + line + "'");
    SweepPoint p;
    p.training_size = parse_count(cells[0]);
    PRResult* prs[] = {&p.detection, &p.location};
    for (int k = 0; k < 2; ++k) {
      prs[k]->precision = parse_optional(cells[1 + 5 * k]);
      prs[k]->recall = parse_optional(cells[2 + 5 * k]);
      prs[k]->counts = {parse_count(cells[3 + 5 * k]), parse_count(cells[4 + 5 * k]),
                        parse_count(cells[5 + 5 * k])};
    }
    r.points.push_back(p);
  }
  return r;
}

TimingReport summarize_timings(std::span<const StageTiming> timings) {
  if (timings.empty()) throw Error("summarize_timings: no timings");
  TimingReport r;
  r.image_count = timings.size();
  auto stats = [&](double StageTiming::*field) {
    StageStats s{0.0, timings[0].*field, timings[0].*field};
    for (const auto& t : timings) {
      s.mean_ms += t.*field;
      s.min_ms = std::min(s.min_ms, t.*field);
      s.max_ms = std::max(s.max_ms, t.*field);
    }
    s.mean_ms /= double(timings.size());
    // Keep mean inside [min, max] despite rounding.
    s.mean_ms = std::clamp(s.mean_ms, s.min_ms, s.max_ms);
    return s;
  };
  r.detect = stats(&StageTiming::detect_ms);
  r.crop = stats(&StageTiming::crop_ms);
  r.segment = stats(&StageTiming::segment_ms);
  r.map = stats(&StageTiming::map_ms);
  r.total = stats(&StageTiming::total_ms);
  return r;
}

TimingReport bench(std::span<const CorpusSample> corpus, const Detector& detector, UNet& segmenter,
                   const CascadeConfig& cascade, std::size_t warmup) {
  require_nonempty(corpus, "bench");
  for (std::size_t i = 0; i < warmup; ++i) locate(corpus[i % corpus.size()].image, detector, segmenter, cascade);
  std::vector<StageTiming> timings;
  for (const auto& s : corpus) timings.push_back(locate(s.image, detector, segmenter, cascade).timing);
  return summarize_timings(timings);
}

std::string timing_to_json(const TimingReport& r) {
  ojson j;
  j["image_count"] = r.image_count;
  const std::pair<const char*, const StageStats*> stages[] = {
      {"detect", &r.detect}, {"crop", &r.crop}, {"segment", &r.segment}, {"map", &r.map}, {"total", &r.total}};
  for (auto [name, s] : stages) {
    j[name] = {{"mean_ms", s->mean_ms}, {"min_ms", s->min_ms}, {"max_ms", s->max_ms}};
  }
  return j.dump(2) + "\n";
}

TimingReport timing_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    TimingReport r;
    r.image_count = j.at("image_count").get<std::size_t>();
    const std::pair<const char*, StageStats*> stages[] = {
        {"detect", &r.detect}, {"crop", &r.crop}, {"segment", &r.segment}, {"map", &r.map}, {"total", &r.total}};
    for (auto [name, s] : stages) {
      const auto& e = j.at(name);
      *s = {e.at("mean_ms").get<double>(), e.at("min_ms").get<double>(), e.at("max_ms").get<double>()};
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("timing JSON: ") + e.what());
  }
}

}  // namespace insloc
