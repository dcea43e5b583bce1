/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include "cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>

#include "insloc/checkpoint.hpp"
#include "insloc/config.hpp"
#include "insloc/error.hpp"
#include "insloc/experiment.hpp"

namespace insloc::cli {

namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
};

struct Options {
  std::string corpus;
  std::string detector;
  std::string segmenter;
  std::string full_segmenter;
  std::string break_detector;
  std::string image;
  std::string mode = "cascade";
  std::string protocol = "detection";
  bool overlay = false;
  bool all_samples = false;
};

void add_common(CLI::App& cmd, Common& c) {
  cmd.add_option("--config", c.config_path, "key = value run configuration");
  cmd.add_option("--seed", c.seed, "seed for every random choice")->capture_default_str();
  cmd.add_option("--out", c.out_dir, "output directory")->capture_default_str();
}

RunConfig load_config(const Common& c) {
  return c.config_path.empty() ? RunConfig{} : load_run_config(c.config_path);
}

fs::path out_file(const Common& c, const std::string& name) {
  fs::create_directories(c.out_dir);
  return fs::path(c.out_dir) / name;
}

std::vector<CorpusSample> held_out(const std::vector<CorpusSample>& corpus, const RunConfig& cfg,
                                   std::uint64_t seed) {
  return select_samples(corpus, corpus_split(corpus, cfg.detection_folds, cfg.fold, seed).test);
}

std::vector<CorpusSample> training_part(const std::vector<CorpusSample>& corpus,
                                        const RunConfig& cfg, std::uint64_t seed, bool all) {
  if (all) return corpus;
  return select_samples(corpus, corpus_split(corpus, cfg.detection_folds, cfg.fold, seed).train);
}

std::unique_ptr<Detector> load_detector(const std::string& path, const DetectorConfig& cfg) {
  auto det = Detector::from_state(load_checkpoint(path), cfg);
  if (!det->trained()) throw TrainingError(path + ": detector weights are not trained");
  return det;
}

std::unique_ptr<UNet> load_unet(const std::string& path, const UNetConfig& expected) {
  auto net = UNet::from_state(load_checkpoint(path));
  if (!(net->config() == expected)) throw FormatError(path + ": U-net shape differs from the config");
  return net;
}

void write_metrics(const fs::path& path, const PRResult& r, std::ostream& out) {
  write_file_atomic(path, pr_to_json(r));
  out << path.string() << ": " << pr_to_json(r);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Locate missing discs in insulator strings"};
  app.require_subcommand(1);
  Common common;
  Options o;

  auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic corpus into --out");
  add_common(*gen, common);

  auto* train_det = app.add_subcommand("train-detect", "train the string detector");
  add_common(*train_det, common);
  train_det->add_option("--corpus", o.corpus, "corpus directory")->required();
  train_det->add_flag("--all", o.all_samples, "train on every sample instead of the training folds");

  auto* train_seg = app.add_subcommand("train-seg", "train a segmenter (crop or full mode)");
  add_common(*train_seg, common);
  train_seg->add_option("--corpus", o.corpus, "corpus directory")->required();
  train_seg->add_option("--mode", o.mode, "crop or full")->check(CLI::IsMember({"crop", "full"}));
  train_seg->add_flag("--all", o.all_samples, "train on every sample instead of the training folds");

  auto* loc = app.add_subcommand("locate", "run the cascade on one image");
  add_common(*loc, common);
  loc->add_option("--image", o.image, "PNG image")->required();
  loc->add_option("--detector", o.detector, "detector checkpoint")->required();
  loc->add_option("--segmenter", o.segmenter, "crop segmenter checkpoint")->required();
  loc->add_flag("--overlay", o.overlay, "also write overlay.png");

  auto* eval_det = app.add_subcommand("eval-detect", "string detection metrics on the held-out fold");
  add_common(*eval_det, common);
  eval_det->add_option("--corpus", o.corpus, "corpus directory")->required();
  eval_det->add_option("--detector", o.detector, "detector checkpoint")->required();

  auto* eval_loc = app.add_subcommand("eval-locate", "break location metrics on the held-out fold");
  add_common(*eval_loc, common);
  eval_loc->add_option("--corpus", o.corpus, "corpus directory")->required();
  eval_loc->add_option("--detector", o.detector, "detector checkpoint")->required();
  eval_loc->add_option("--segmenter", o.segmenter, "crop segmenter checkpoint")->required();

  auto* cv = app.add_subcommand("crossval", "k-fold training and evaluation");
  add_common(*cv, common);
  cv->add_option("--corpus", o.corpus, "corpus directory")->required();
  cv->add_option("--protocol", o.protocol, "detection or segmentation")
      ->check(CLI::IsMember({"detection", "segmentation"}));

  auto* abl = app.add_subcommand("ablate", "break location per mode on the held-out fold");
  add_common(*abl, common);
  abl->add_option("--corpus", o.corpus, "corpus directory")->required();
  abl->add_option("--mode", o.mode, "unet_only, detector_only, cascade or all")
      ->check(CLI::IsMember({"unet_only", "detector_only", "cascade", "all"}));
  abl->add_option("--detector", o.detector, "string detector checkpoint (else trained)");
  abl->add_option("--segmenter", o.segmenter, "crop segmenter checkpoint (else trained)");
  abl->add_option("--full-segmenter", o.full_segmenter, "full-image segmenter checkpoint (else trained)");
  abl->add_option("--break-detector", o.break_detector, "break detector checkpoint (else trained)");

  auto* sweep = app.add_subcommand("sweep", "training-size sweep");
  add_common(*sweep, common);

  auto* bch = app.add_subcommand("bench", "per-stage timing over the held-out fold");
  add_common(*bch, common);
  bch->add_option("--corpus", o.corpus, "corpus directory")->required();
  bch->add_option("--detector", o.detector, "detector checkpoint")->required();
  bch->add_option("--segmenter", o.segmenter, "crop segmenter checkpoint")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  RunConfig cfg;
  try {
    cfg = load_config(common);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    const std::uint64_t seed = common.seed;
    if (gen->parsed()) {
      const auto m = make_corpus(common.out_dir, cfg.corpus_size, cfg.positive_fraction, cfg.generator, seed);
      out << "wrote " << m.samples.size() << " samples (" << m.positive_count << " positive) to "
          << common.out_dir << '\n';
    } else if (train_det->parsed()) {
      const auto corpus = training_part(load_corpus(o.corpus), cfg, seed, o.all_samples);
      const auto det = train_string_detector(corpus, cfg, seed);
      save_checkpoint(out_file(common, "detector.ckpt"), det.model->state());
      write_file_atomic(out_file(common, "detector_loss.csv"), det.curve.to_csv());
      out << "trained detector on " << corpus.size() << " images; final loss "
          << det.curve.points.back().second << '\n';
    } else if (train_seg->parsed()) {
      const auto corpus = training_part(load_corpus(o.corpus), cfg, seed, o.all_samples);
      const bool crop = o.mode != "full";
      auto seg = crop ? train_crop_segmenter(corpus, cfg, seed) : train_full_segmenter(corpus, cfg, seed);
      const std::string stem = crop ? "segmenter" : "full_segmenter";
      save_checkpoint(out_file(common, stem + ".ckpt"), seg.model->state());
      write_file_atomic(out_file(common, stem + "_loss.csv"), seg.curve.to_csv());
      out << "trained " << stem << " on " << corpus.size() << " images; final loss "
          << seg.curve.points.back().second << '\n';
    } else if (loc->parsed()) {
      const auto det = load_detector(o.detector, cfg.detector);
      auto seg = load_unet(o.segmenter, cfg.unet);
      const Image image = read_png(o.image);
      const auto report = locate(image, *det, *seg, cfg.cascade);
      write_file_atomic(out_file(common, "report.json"), report_to_json(report));
      if (o.overlay) write_png(out_file(common, "overlay.png"), render_overlay(image, report));
      out << report.string_boxes.size() << " strings, " << report.breaks.size() << " break regions\n";
    } else if (eval_det->parsed()) {
      const auto test = held_out(load_corpus(o.corpus), cfg, seed);
      const auto det = load_detector(o.detector, cfg.detector);
      write_metrics(out_file(common, "detection_metrics.json"),
                    evaluate_detector(*det, test, cfg.overlap_threshold), out);
    } else if (eval_loc->parsed()) {
      const auto test = held_out(load_corpus(o.corpus), cfg, seed);
      const auto det = load_detector(o.detector, cfg.detector);
      auto seg = load_unet(o.segmenter, cfg.unet);
      AblationModels models;
      models.string_detector = det.get();
      models.crop_segmenter = seg.get();
      write_metrics(out_file(common, "location_metrics.json"),
                    run_ablation(test, models, AblationMode::kCascade, cfg.cascade), out);
    } else if (cv->parsed()) {
      const auto r = crossval(load_corpus(o.corpus), parse_crossval_protocol(o.protocol), cfg, seed);
      const auto path = out_file(common, "crossval_" + o.protocol + ".json");
      write_file_atomic(path, crossval_to_json(r));
      out << path.string() << ": " << crossval_to_json(r);
    } else if (abl->parsed()) {
      const auto corpus = load_corpus(o.corpus);
      const auto train = training_part(corpus, cfg, seed, false);
      const auto test = held_out(corpus, cfg, seed);
      std::vector<AblationMode> modes;
      if (o.mode == "all") {
        modes = {AblationMode::kUnetOnly, AblationMode::kDetectorOnly, AblationMode::kCascade};
      } else {
        modes = {parse_ablation_mode(o.mode)};
      }
      std::unique_ptr<Detector> det, break_det;
      std::unique_ptr<UNet> seg, full;
      AblationModels models;
      for (auto m : modes) {
        if (m == AblationMode::kCascade) {
          det = o.detector.empty() ? train_string_detector(train, cfg, seed).model
                                   : load_detector(o.detector, cfg.detector);
          seg = o.segmenter.empty() ? train_crop_segmenter(train, cfg, seed).model
                                    : load_unet(o.segmenter, cfg.unet);
          models.string_detector = det.get();
          models.crop_segmenter = seg.get();
        } else if (m == AblationMode::kUnetOnly) {
          full = o.full_segmenter.empty() ? train_full_segmenter(train, cfg, seed).model
                                          : load_unet(o.full_segmenter, cfg.unet);
          models.full_segmenter = full.get();
        } else {
          break_det = o.break_detector.empty()
                          ? train_break_detector(train, cfg, seed).model
                          : load_detector(o.break_detector, break_detector_config(cfg.detector));
          models.break_detector = break_det.get();
        }
        const std::string name(ablation_mode_name(m));
        write_metrics(out_file(common, "ablation_" + name + ".json"),
                      run_ablation(test, models, m, cfg.cascade), out);
      }
    } else if (sweep->parsed()) {
      const auto r = sweep_training_size(cfg, seed, [&](const SweepPoint& p) {
        out << "size " << p.training_size << ": location recall "
            << (p.location.recall ? std::to_string(*p.location.recall) : "undefined") << '\n';
      });
      write_file_atomic(out_file(common, "sweep.csv"), sweep_to_csv(r));
    } else if (bch->parsed()) {
      const auto test = held_out(load_corpus(o.corpus), cfg, seed);
      const auto det = load_detector(o.detector, cfg.detector);
      auto seg = load_unet(o.segmenter, cfg.unet);
      const auto r = bench(test, *det, *seg, cfg.cascade, cfg.bench_warmup);
      const auto path = out_file(common, "timing.json");
      write_file_atomic(path, timing_to_json(r));
      out << path.string() << ": " << timing_to_json(r);
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace insloc::cli
