/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include "insloc/unet.hpp"

#include <cmath>
#include <sstream>

#include "insloc/error.hpp"

namespace insloc {

void UNetConfig::validate() const {
  if (depth < 1) throw ConfigError("unet depth must be >= 1");
  if (base_channels < 1) throw ConfigError("unet base_channels must be >= 1");
  if (in_channels < 1) throw ConfigError("unet in_channels must be >= 1");
}

PaddingRequirement validate_input_size(std::size_t height, std::size_t width, std::size_t depth) {
  if (height == 0 || width == 0) throw ShapeError("validate_input_size: extents must be positive");
  const std::size_t m = std::size_t{1} << depth;
  const std::size_t ph = (m - height % m) % m;
  const std::size_t pw = (m - width % m) % m;
  PaddingRequirement r;
  r.ok = ph == 0 && pw == 0;
  r.top = ph / 2;
  r.bottom = ph - ph / 2;
  r.left = pw / 2;
  r.right = pw - pw / 2;
  return r;
}

Var skip_fuse(const Var& encoder_features, const Var& decoder_features) {
  const auto& a = encoder_features.shape();
  const auto& b = decoder_features.shape();
  if (a.size() != 4 || b.size() != 4 || a[0] != b[0] || a[2] != b[2] || a[3] != b[3]) {
    throw ShapeError("skip_fuse: encoder " + shape_str(a) + " and decoder " + shape_str(b) +
                     " differ in batch or spatial extent");
  }
  return ops::concat_channels(encoder_features, decoder_features);
}

UNet::UNet(UNetConfig config, std::uint64_t seed, Init init) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  auto add_unit = [&](const std::string& name, std::size_t in, std::size_t out) {
    ConvUnit u{Conv2d(params_, name + ".conv", in, out, 3, rng, init, !config_.use_batchnorm),
               nullptr};
    if (config_.use_batchnorm) u.norm = &norms_.emplace_back(params_, name + ".bn", out);
    units_.push_back(std::move(u));
  };
  std::size_t in = config_.in_channels;
  for (std::size_t l = 0; l <= config_.depth; ++l) {
    const std::size_t c = config_.base_channels << l;
    const std::string level = l == config_.depth ? "unet.mid" : "unet.enc" + std::to_string(l);
    add_unit(level + ".0", in, c);
    add_unit(level + ".1", c, c);
    in = c;
  }
  for (std::size_t l = config_.depth; l-- > 0;) {
    const std::size_t c = config_.base_channels << l;
    const std::string level = "unet.dec" + std::to_string(l);
    ups_.emplace_back(params_, level + ".up", 2 * c, c, rng, init);
    add_unit(level + ".0", 2 * c, c);
    add_unit(level + ".1", c, c);
  }
  head_ = std::make_unique<Conv2d>(params_, "unet.head", config_.base_channels, 2, 1, rng, init);
}

Var UNet::unit(const ConvUnit& u, const Var& x, ops::Mode mode) {
  Var y = u.conv(x);
  if (u.norm) y = (*u.norm)(y, mode);
  return ops::relu(y);
}

Var UNet::forward(const Var& input, ops::Mode mode) {
  const auto& s = input.shape();
  if (s.size() != 4 || s[1] != config_.in_channels) {
    throw ShapeError("unet input must be [N, " + std::to_string(config_.in_channels) +
                     ", H, W], got " + shape_str(s));
  }
  std::vector<Var> skips;
  Var x = input;
  std::size_t k = 0;
  for (std::size_t l = 0; l < config_.depth; ++l) {
    x = unit(units_[k], x, mode);
    x = unit(units_[k + 1], x, mode);
    k += 2;
    skips.push_back(x);
    x = ops::maxpool2x2(x);
  }
  x = unit(units_[k], x, mode);
  x = unit(units_[k + 1], x, mode);
  k += 2;
  for (std::size_t i = 0; i < config_.depth; ++i) {
    x = ups_[i](x);
    x = skip_fuse(skips[config_.depth - 1 - i], x);
    x = unit(units_[k], x, mode);
    x = unit(units_[k + 1], x, mode);
    k += 2;
  }
  return (*head_)(x);
}

std::vector<NamedTensor> UNet::state() const {
  auto out = export_state(params_, norms_);
  out.push_back({"unet.meta.config",
                 Tensor({4}, std::vector<double>{double(config_.depth), double(config_.base_channels),
                                                 config_.use_batchnorm ? 1.0 : 0.0,
                                                 double(config_.in_channels)})});
  out.push_back({"unet.meta.trained", Tensor({1}, trained_ ? 1.0 : 0.0)});
  return out;
}

std::unique_ptr<UNet> UNet::from_state(std::span<const NamedTensor> entries) {
  const auto* meta = find_entry(entries, "unet.meta.config");
  if (!meta || meta->value.numel() != 4) throw FormatError("checkpoint has no U-net configuration");
  UNetConfig c;
  c.depth = static_cast<std::size_t>(meta->value[0]);
  c.base_channels = static_cast<std::size_t>(meta->value[1]);
  c.use_batchnorm = meta->value[2] != 0.0;
  c.in_channels = static_cast<std::size_t>(meta->value[3]);
  auto net = std::make_unique<UNet>(c, 0, Init::kZeros);
  import_state(entries, net->params_, net->norms_);
  const auto* trained = find_entry(entries, "unet.meta.trained");
  net->trained_ = trained && trained->value[0] != 0.0;
  return net;
}

Image SegmentationMask::to_image() const {
  Image img(width, height, 1, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) img.pixels[i] = labels[i] ? 255 : 0;
  return img;
}

SegmentationMask SegmentationMask::from_image(const Image& mask) {
  if (mask.channels != 1) throw FormatError("mask image must be single-channel");
  SegmentationMask m;
  m.width = mask.width;
  m.height = mask.height;
  m.labels.resize(mask.pixels.size());
  m.probabilities.resize(mask.pixels.size());
  for (std::size_t i = 0; i < mask.pixels.size(); ++i) {
    m.labels[i] = mask.pixels[i] != 0;
    m.probabilities[i] = m.labels[i] ? 1.0 : 0.0;
  }
  return m;
}

namespace {

Tensor padded_input(const Image& image, const PaddingRequirement& pad) {
  const Tensor t = image_to_tensor(image);
  if (pad.ok) return t;
  const std::size_t c = image.channels, h = image.height, w = image.width;
  const std::size_t ph = h + pad.top + pad.bottom, pw = w + pad.left + pad.right;
  Tensor out({1, c, ph, pw}, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) out.at(0, ch, y + pad.top, x + pad.left) = t.at(0, ch, y, x);
    }
  }
  return out;
}

std::vector<std::uint8_t> padded_labels(const Image& labels, const PaddingRequirement& pad) {
  const std::size_t h = labels.height, w = labels.width;
  const std::size_t pw = w + pad.left + pad.right;
  std::vector<std::uint8_t> out((h + pad.top + pad.bottom) * pw, 0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) out[(y + pad.top) * pw + x + pad.left] = labels.at(x, y) != 0;
  }
  return out;
}

}  // namespace

SegmentationMask predict_mask(UNet& net, const Image& image, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must be in (0, 1)");
  const auto pad = validate_input_size(image.height, image.width, net.config().depth);
  NoGradGuard no_grad;
  const Tensor logits = net.forward(Var(padded_input(image, pad)), ops::Mode::kInfer).value();
  const std::size_t ph = logits.dim(2), pw = logits.dim(3);
  if (ph != image.height + pad.top + pad.bottom || pw != image.width + pad.left + pad.right) {
    throw Error("predict_mask: internal padding error");
  }
  SegmentationMask m;
  m.width = image.width;
  m.height = image.height;
  m.labels.resize(image.width * image.height);
  m.probabilities.resize(image.width * image.height);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      const double l0 = logits.at(0, 0, y + pad.top, x + pad.left);
      const double l1 = logits.at(0, 1, y + pad.top, x + pad.left);
      const double p = 1.0 / (1.0 + std::exp(l0 - l1));
      m.probabilities[y * image.width + x] = p;
      m.labels[y * image.width + x] = p >= threshold;
    }
  }
  return m;
}

std::string LossCurve::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "step,loss\n";
  for (auto [step, loss] : points) out << step << ',' << loss << '\n';
  return out.str();
}

LossCurve LossCurve::from_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != "step,loss") throw FormatError("loss CSV header must be 'step,loss'");
  LossCurve c;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("loss CSV row without comma: " + line);
    try {
      c.points.emplace_back(std::stoull(line.substr(0, comma)), std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw FormatError("bad loss CSV row: " + line);
    }
  }
  return c;
}

double LossCurve::head_mean(std::size_t window) const {
  window = std::min(window, points.size());
  if (window == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < window; ++i) s += points[i].second;
  return s / double(window);
}

double LossCurve::tail_mean(std::size_t window) const {
  window = std::min(window, points.size());
  if (window == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = points.size() - window; i < points.size(); ++i) s += points[i].second;
  return s / double(window);
}

void SegTrainConfig::validate() const {
  optimizer.validate();
  if (!(broken_weight > 0.0)) throw ConfigError("broken_weight must be > 0");
}

LossCurve train_segmenter(UNet& net, std::span<const SegSample> samples,
                          const SegTrainConfig& config) {
  config.validate();
  if (samples.empty()) throw TrainingError("train_segmenter: empty sample set");
  constexpr AugmentOp kOps[] = {AugmentOp::kIdentity, AugmentOp::kRot90, AugmentOp::kRot180,
                                AugmentOp::kRot270,   AugmentOp::kFlipH, AugmentOp::kFlipV};
  std::mt19937_64 rng(config.seed);
  Optimizer opt(config.optimizer);
  const std::vector<double> weights{1.0, config.broken_weight};
  LossCurve curve;
  for (std::size_t step = 0; step < config.steps; ++step) {
    const auto& s = samples[std::uniform_int_distribution<std::size_t>(0, samples.size() - 1)(rng)];
    const AugmentOp op = config.augment ? kOps[std::uniform_int_distribution<int>(0, 5)(rng)]
                                        : AugmentOp::kIdentity;
    Image img = augment(s.image, op);
    Image lab = augment(s.labels, op);
    if (config.window > 0) {
      const std::size_t w = std::min(config.window, img.width), h = std::min(config.window, img.height);
      const auto x0 = long(std::uniform_int_distribution<std::size_t>(0, img.width - w)(rng));
      const auto y0 = long(std::uniform_int_distribution<std::size_t>(0, img.height - h)(rng));
      img = crop_image(img, x0, y0, w, h);
      lab = crop_image(lab, x0, y0, w, h);
    }
    const auto pad = validate_input_size(img.height, img.width, net.config().depth);
    const Var x(padded_input(img, pad));
    const auto targets = padded_labels(lab, pad);
    net.parameters().zero_grad();
    Var loss = ops::softmax_cross_entropy_2d(net.forward(x, ops::Mode::kTrain), targets, weights);
    const double v = loss.value()[0];
    if (!std::isfinite(v)) {
      throw TrainingError("train_segmenter: non-finite loss at step " + std::to_string(step));
    }
    loss.backward();
    opt.step(net.parameters());
    curve.points.emplace_back(step, v);
  }
  net.mark_trained();
  return curve;
}

}  // namespace insloc
