/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include "insloc/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "insloc/checkpoint.hpp"
#include "insloc/error.hpp"

namespace insloc {

namespace {

constexpr double kRodHalfWidth = 1.6;
constexpr double kCapRadius = 2.0;
constexpr double kStringClearance = 2.0;
constexpr int kPlacementAttempts = 100;

using Canvas = std::vector<double>;  // H x W x 3 floats

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t uniform_int(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::array<double, 3> random_color(std::mt19937_64& rng, double lo, double hi) {
  return {uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi)};
}

void paint(Canvas& c, std::size_t w, std::size_t x, std::size_t y,
           const std::array<double, 3>& rgb) {
  double* p = &c[(y * w + x) * 3];
  p[0] = rgb[0];
  p[1] = rgb[1];
  p[2] = rgb[2];
}

void fill_background(Canvas& c, const SceneSpec& spec, std::mt19937_64& rng) {
  const std::size_t w = spec.width, h = spec.height;
  const auto c1 = random_color(rng, 40, 200);
  const auto c2 = random_color(rng, 40, 200);
  auto blend = [&](std::size_t x, std::size_t y, double t) {
    paint(c, w, x, y,
          {c1[0] * (1 - t) + c2[0] * t, c1[1] * (1 - t) + c2[1] * t, c1[2] * (1 - t) + c2[2] * t});
  };
  switch (spec.background) {
    case Background::kGradient: {
      const double a = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      const double ca = std::cos(a), sa = std::sin(a);
      double lo = 1e300, hi = -1e300;
      for (double y : {0.0, double(h - 1)}) {
        for (double x : {0.0, double(w - 1)}) {
          lo = std::min(lo, x * ca + y * sa);
          hi = std::max(hi, x * ca + y * sa);
        }
      }
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          blend(x, y, (double(x) * ca + double(y) * sa - lo) / (hi - lo + 1e-9));
        }
      }
      break;
    }
    case Background::kNoiseTexture: {
      constexpr std::size_t cell = 16;
      const std::size_t gw = w / cell + 2, gh = h / cell + 2;
      std::vector<double> grid(gw * gh);
      for (auto& g : grid) g = uniform(rng, 0.0, 1.0);
      for (std::size_t y = 0; y < h; ++y) {
        const double gy = double(y) / cell;
        const std::size_t y0 = static_cast<std::size_t>(gy);
        const double fy = gy - double(y0);
        for (std::size_t x = 0; x < w; ++x) {
          const double gx = double(x) / cell;
          const std::size_t x0 = static_cast<std::size_t>(gx);
          const double fx = gx - double(x0);
          const double v = grid[y0 * gw + x0] * (1 - fy) * (1 - fx) +
                           grid[(y0 + 1) * gw + x0] * fy * (1 - fx) +
                           grid[y0 * gw + x0 + 1] * (1 - fy) * fx +
                           grid[(y0 + 1) * gw + x0 + 1] * fy * fx;
          blend(x, y, v);
        }
      }
      break;
    }
    case Background::kStripedField: {
      const double a = uniform(rng, 0.0, std::numbers::pi);
      const double period = uniform(rng, 10.0, 30.0);
      const double ca = std::cos(a), sa = std::sin(a);
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const auto band = static_cast<long>(std::floor((double(x) * ca + double(y) * sa) / period));
          blend(x, y, (band % 2 == 0) ? 0.0 : 1.0);
        }
      }
      break;
    }
  }
}

void draw_clutter(Canvas& c, const SceneSpec& spec, std::mt19937_64& rng) {
  const std::size_t w = spec.width, h = spec.height;
  for (std::size_t i = 0; i < spec.clutter_count; ++i) {
    const auto color = random_color(rng, 0, 255);
    const std::size_t kind = uniform_int(rng, 0, 2);
    const double x0 = uniform(rng, 0, double(w)), y0 = uniform(rng, 0, double(h));
    const double p1 = uniform(rng, 0, 1), p2 = uniform(rng, 0, 1);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double px = double(x), py = double(y);
        bool inside = false;
        if (kind == 0) {
          const double rw = 8 + 42 * p1, rh = 8 + 42 * p2;
          inside = px >= x0 && px < x0 + rw && py >= y0 && py < y0 + rh;
        } else if (kind == 1) {
          const double a = p1 * std::numbers::pi, thick = 1 + 2 * p2;
          inside = std::abs((px - x0) * std::sin(a) - (py - y0) * std::cos(a)) < thick / 2;
        } else {
          const double rx = 5 + 20 * p1, ry = 5 + 20 * p2;
          const double u = (px - x0) / rx, v = (py - y0) / ry;
          inside = u * u + v * v <= 1.0;
        }
        if (inside) paint(c, w, x, y, color);
      }
    }
  }
}

// Validates placement; returns per-string footprint pixel lists.
std::vector<std::vector<std::pair<std::size_t, std::size_t>>> check_strings(
    const SceneSpec& spec) {
  const double w = double(spec.width), h = double(spec.height);
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> footprints;
  std::vector<std::uint8_t> occupied(spec.width * spec.height, 0);
  for (std::size_t s = 0; s < spec.strings.size(); ++s) {
    const auto& str = spec.strings[s];
    if (str.disc_count < 4) throw Error("insulator string needs at least 4 discs");
    if (!(str.disc_radius > 0.0) || !(str.spacing > 0.0)) {
      throw Error("insulator string radius and spacing must be positive");
    }
    for (auto m : str.missing_indices) {
      if (m >= str.disc_count) throw Error("missing disc index out of range");
    }
    std::vector<std::pair<std::size_t, std::size_t>> fp;
    for (auto [cx, cy] : str.disc_centers()) {
      if (cx - str.disc_radius < 0 || cy - str.disc_radius < 0 || cx + str.disc_radius > w ||
          cy + str.disc_radius > h) {
        throw Error("string placement infeasible: string " + std::to_string(s) +
                    " leaves the image");
      }
      auto d = disc_footprint(cx, cy, str.disc_radius, spec.width, spec.height);
      fp.insert(fp.end(), d.begin(), d.end());
    }
    std::sort(fp.begin(), fp.end());
    fp.erase(std::unique(fp.begin(), fp.end()), fp.end());
    for (auto [cx, cy] : str.disc_centers()) {
      for (auto [x, y] : disc_footprint(cx, cy, str.disc_radius + kStringClearance, spec.width,
                                        spec.height)) {
        auto& o = occupied[y * spec.width + x];
        if (o != 0 && o != s + 1) {
          throw Error("string placement infeasible: strings overlap");
        }
        o = static_cast<std::uint8_t>(s + 1);
      }
    }
    footprints.push_back(std::move(fp));
  }
  return footprints;
}

void draw_string(Canvas& c, const SceneSpec& spec, const InsulatorStringSpec& str, Image& mask) {
  const std::size_t w = spec.width, h = spec.height;
  const auto centers = str.disc_centers();
  const auto [ax, ay] = centers.front();
  const auto [bx, by] = centers.back();
  const double len2 = (bx - ax) * (bx - ax) + (by - ay) * (by - ay);
  const std::array<double, 3> rod{70, 70, 75};
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double px = double(x) + 0.5, py = double(y) + 0.5;
      const double t = std::clamp(((px - ax) * (bx - ax) + (py - ay) * (by - ay)) / len2, 0.0, 1.0);
      if (std::hypot(px - (ax + t * (bx - ax)), py - (ay + t * (by - ay))) <= kRodHalfWidth) {
        paint(c, w, x, y, rod);
      }
    }
  }
  const auto& g = str.disc_color;
  const std::array<double, 3> rim{g[0] * 0.75, g[1] * 0.75, g[2] * 0.75};
  const std::array<double, 3> core{g[0] * 0.6, g[1] * 0.6, g[2] * 0.6};
  const std::array<double, 3> cap{50, 50, 55};
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const auto [cx, cy] = centers[i];
    const bool missing = str.missing_indices.count(i) != 0;
    for (auto [x, y] : disc_footprint(cx, cy, str.disc_radius, w, h)) {
      const double d = std::hypot(double(x) + 0.5 - cx, double(y) + 0.5 - cy);
      if (missing) {
        mask.at(x, y) = 255;
        if (d <= kCapRadius) paint(c, w, x, y, cap);
      } else if (d <= str.disc_radius * 0.35) {
        paint(c, w, x, y, core);
      } else if (d <= str.disc_radius - 2.0) {
        paint(c, w, x, y, g);
      } else {
        paint(c, w, x, y, rim);
      }
    }
  }
}

std::string sample_stem(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return buf;
}

}  // namespace

std::vector<std::array<double, 2>> InsulatorStringSpec::disc_centers() const {
  std::vector<std::array<double, 2>> out;
  const double dx = std::cos(angle), dy = std::sin(angle);
  const double mid = (double(disc_count) - 1.0) / 2.0;
  for (std::size_t i = 0; i < disc_count; ++i) {
    const double o = (double(i) - mid) * spacing;
    out.push_back({anchor_point[0] + o * dx, anchor_point[1] + o * dy});
  }
  return out;
}

void GeneratorConfig::validate() const {
  if (image_size < 64) throw ConfigError("image_size must be at least 64");
  if (strings_min < 1 || strings_max < strings_min) throw ConfigError("invalid string count range");
  if (disc_count_min < 4 || disc_count_max < disc_count_min) {
    throw ConfigError("invalid disc count range (minimum 4)");
  }
  if (!(disc_radius_min > 0.0) || disc_radius_max < disc_radius_min) {
    throw ConfigError("invalid disc radius range");
  }
  if (clutter_max < clutter_min) throw ConfigError("invalid clutter range");
  if (missing_max < 1) throw ConfigError("missing_max must be at least 1");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
}

std::vector<std::pair<std::size_t, std::size_t>> disc_footprint(double cx, double cy,
                                                                double radius,
                                                                std::size_t width,
                                                                std::size_t height) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const long x0 = std::max(0L, static_cast<long>(std::floor(cx - radius - 1)));
  const long x1 = std::min(static_cast<long>(width) - 1, static_cast<long>(std::ceil(cx + radius + 1)));
  const long y0 = std::max(0L, static_cast<long>(std::floor(cy - radius - 1)));
  const long y1 = std::min(static_cast<long>(height) - 1, static_cast<long>(std::ceil(cy + radius + 1)));
  const double r2 = radius * radius;
  for (long y = y0; y <= y1; ++y) {
    for (long x = x0; x <= x1; ++x) {
      const double dx = double(x) + 0.5 - cx, dy = double(y) + 0.5 - cy;
      if (dx * dx + dy * dy <= r2) out.emplace_back(std::size_t(x), std::size_t(y));
    }
  }
  return out;
}

RenderedScene render_scene(const SceneSpec& spec) {
  if (spec.width == 0 || spec.height == 0) throw Error("scene extents must be positive");
  const auto footprints = check_strings(spec);
  std::mt19937_64 rng(spec.seed);
  Canvas canvas(spec.width * spec.height * 3, 0.0);
  fill_background(canvas, spec, rng);
  draw_clutter(canvas, spec, rng);

  RenderedScene out;
  out.mask = Image(spec.width, spec.height, 1, 0);
  for (std::size_t s = 0; s < spec.strings.size(); ++s) {
    draw_string(canvas, spec, spec.strings[s], out.mask);
    std::size_t x0 = spec.width, y0 = spec.height, x1 = 0, y1 = 0;
    for (auto [x, y] : footprints[s]) {
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x + 1);
      y1 = std::max(y1, y + 1);
    }
    out.annotation.boxes.push_back({double(x0), double(y0), double(x1), double(y1)});
    if (!spec.strings[s].missing_indices.empty()) out.annotation.is_positive = true;
  }

  out.image = Image(spec.width, spec.height, 3);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double sigma = spec.noise_sigma;
  for (std::size_t i = 0; i < canvas.size(); ++i) {
    const double v = canvas[i] + sigma * noise(rng);
    out.image.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
  }
  return out;
}

SceneSpec sample_scene(const GeneratorConfig& config, bool positive, std::mt19937_64& rng) {
  config.validate();
  SceneSpec spec;
  spec.width = spec.height = config.image_size;
  spec.background = static_cast<Background>(uniform_int(rng, 0, 2));
  spec.seed = rng();
  spec.clutter_count = uniform_int(rng, config.clutter_min, config.clutter_max);
  spec.noise_sigma = config.noise_sigma;
  const std::size_t n_strings = uniform_int(rng, config.strings_min, config.strings_max);
  const std::size_t broken = positive ? uniform_int(rng, 0, n_strings - 1) : n_strings;
  const double size = double(config.image_size);

  for (std::size_t s = 0; s < n_strings; ++s) {
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      InsulatorStringSpec str;
      str.disc_count = uniform_int(rng, config.disc_count_min, config.disc_count_max);
      str.disc_radius = uniform(rng, config.disc_radius_min, config.disc_radius_max);
      str.spacing = 2.0 * str.disc_radius - 1.0;
      str.angle = uniform(rng, 15.0, 75.0) * std::numbers::pi / 180.0;
      if (uniform(rng, 0.0, 1.0) < 0.5) str.angle = std::numbers::pi - str.angle;
      const double half_len = str.spacing * double(str.disc_count - 1) / 2.0;
      const double ext_x = half_len * std::abs(std::cos(str.angle)) + str.disc_radius + 2.0;
      const double ext_y = half_len * std::abs(std::sin(str.angle)) + str.disc_radius + 2.0;
      if (size - 2 * ext_x <= 0 || size - 2 * ext_y <= 0) continue;
      str.anchor_point = {uniform(rng, ext_x, size - ext_x), uniform(rng, ext_y, size - ext_y)};
      str.disc_color = {uniform(rng, 60, 120), uniform(rng, 150, 210), uniform(rng, 170, 230)};
      if (s == broken || (positive && uniform(rng, 0.0, 1.0) < config.extra_broken_probability)) {
        // Interior discs only, so the string's box is unaffected.
        std::vector<std::size_t> interior(str.disc_count - 2);
        std::iota(interior.begin(), interior.end(), std::size_t{1});
        std::shuffle(interior.begin(), interior.end(), rng);
        const std::size_t k = uniform_int(rng, 1, std::min(config.missing_max, interior.size()));
        str.missing_indices.insert(interior.begin(), interior.begin() + k);
      }
      spec.strings.push_back(str);
      try {
        check_strings(spec);
        placed = true;
      } catch (const Error&) {
        spec.strings.pop_back();
      }
    }
    if (!placed) {
      if (s == broken) {
        throw Error("string placement infeasible after 100 attempts");
      }
    }
  }
  if (positive && std::none_of(spec.strings.begin(), spec.strings.end(),
                               [](const auto& s) { return !s.missing_indices.empty(); })) {
    throw Error("string placement infeasible: no broken string placed");
  }
  return spec;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::size_t corpus_positive_count(std::size_t n, double positive_fraction) {
  return static_cast<std::size_t>(std::llround(double(n) * positive_fraction));
}

std::vector<CorpusSample> generate_corpus(std::size_t n, double positive_fraction,
                                          const GeneratorConfig& config, std::uint64_t seed) {
  if (n < 2) throw ConfigError("corpus size must be at least 2");
  if (!(positive_fraction > 0.0 && positive_fraction < 1.0)) {
    throw ConfigError("positive_fraction must be in (0, 1)");
  }
  config.validate();
  const auto n_pos = corpus_positive_count(n, positive_fraction);
  std::vector<bool> positive(n, false);
  std::fill(positive.begin(), positive.begin() + static_cast<long>(n_pos), true);
  std::mt19937_64 order_rng(seed);
  std::shuffle(positive.begin(), positive.end(), order_rng);

  std::vector<CorpusSample> out(n);
  std::vector<std::string> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      out[i].seed = derive_seed(seed, i);
      std::mt19937_64 rng(out[i].seed);
      auto scene = render_scene(sample_scene(config, positive[i], rng));
      out[i].image = std::move(scene.image);
      out[i].mask = std::move(scene.mask);
      out[i].annotation = std::move(scene.annotation);
      out[i].annotation.image_path = "images/" + sample_stem(i) + ".png";
      out[i].annotation.mask_path = "masks/" + sample_stem(i) + ".png";
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) throw Error("sample " + std::to_string(i) + ": " + errors[i]);
  }
  return out;
}

CorpusManifest make_corpus(const std::filesystem::path& dir, std::size_t n,
                           double positive_fraction, const GeneratorConfig& config,
                           std::uint64_t seed) {
  auto samples = generate_corpus(n, positive_fraction, config, seed);
  CorpusManifest m;
  m.seed = seed;
  m.image_size = config.image_size;
  for (const auto& s : samples) {
    write_png(dir / s.annotation.image_path, s.image);
    write_png(dir / s.annotation.mask_path, s.mask);
    m.samples.push_back(s.annotation);
    (s.annotation.is_positive ? m.positive_count : m.negative_count) += 1;
  }
  write_file_atomic(dir / "manifest.json", manifest_to_json(m));
  return m;
}

std::string manifest_to_json(const CorpusManifest& m) {
  nlohmann::ordered_json j;
  j["seed"] = m.seed;
  j["image_size"] = m.image_size;
  j["positive_count"] = m.positive_count;
  j["negative_count"] = m.negative_count;
  j["samples"] = nlohmann::ordered_json::array();
  for (const auto& s : m.samples) {
    nlohmann::ordered_json e;
    e["image"] = s.image_path;
    e["mask"] = s.mask_path;
    e["label"] = "insulator";
    e["boxes"] = nlohmann::ordered_json::array();
    for (const auto& b : s.boxes) e["boxes"].push_back(b.as_array());
    e["is_positive"] = s.is_positive;
    j["samples"].push_back(std::move(e));
  }
  return j.dump(2) + "\n";
}

CorpusManifest manifest_from_json(std::string_view text) {
  CorpusManifest m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.seed = j.at("seed").get<std::uint64_t>();
    m.image_size = j.value("image_size", std::size_t{0});
    for (const auto& e : j.at("samples")) {
      SampleAnnotation a;
      a.image_path = e.at("image").get<std::string>();
      a.mask_path = e.at("mask").get<std::string>();
      a.is_positive = e.at("is_positive").get<bool>();
      for (const auto& b : e.at("boxes")) {
        const auto v = b.get<std::array<double, 4>>();
        Box box{v[0], v[1], v[2], v[3]};
        if (!box.valid()) throw FormatError("manifest box has non-positive area");
        a.boxes.push_back(box);
      }
      (a.is_positive ? m.positive_count : m.negative_count) += 1;
      m.samples.push_back(std::move(a));
    }
    if (j.contains("positive_count") &&
        (j["positive_count"].get<std::size_t>() != m.positive_count ||
         j["negative_count"].get<std::size_t>() != m.negative_count)) {
      throw FormatError("manifest counts disagree with sample flags");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  return m;
}

CorpusManifest load_manifest(const std::filesystem::path& dir) {
  return manifest_from_json(read_file(dir / "manifest.json"));
}

std::vector<CorpusSample> load_corpus(const std::filesystem::path& dir) {
  const auto m = load_manifest(dir);
  std::vector<CorpusSample> out(m.samples.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].annotation = m.samples[i];
    out[i].image = read_png(dir / m.samples[i].image_path);
    out[i].mask = read_png(dir / m.samples[i].mask_path);
    if (out[i].image.channels != 3) {
      throw FormatError(m.samples[i].image_path + ": expected an RGB image");
    }
    if (out[i].mask.channels != 1 || out[i].mask.width != out[i].image.width ||
        out[i].mask.height != out[i].image.height) {
      throw FormatError(m.samples[i].mask_path + ": mask must be gray and match the image");
    }
    out[i].seed = derive_seed(m.seed, i);
  }
  return out;
}

FoldSplit split_kfold(const std::vector<bool>& is_positive, std::size_t k, std::size_t fold_index,
                      std::uint64_t seed) {
  const std::size_t n = is_positive.size();
  if (k < 2 || k > n) throw ConfigError("k must satisfy 2 <= k <= number of samples");
  if (fold_index >= k) throw ConfigError("fold_index must be < k");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < n; ++i) (is_positive[i] ? pos : neg).push_back(i);
  std::mt19937_64 rng(seed);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  // Deal positives then negatives round-robin so both strata and totals
  // stay balanced across folds.
  std::vector<std::size_t> fold_of(n);
  std::size_t next = 0;
  for (auto i : pos) fold_of[i] = next++ % k;
  for (auto i : neg) fold_of[i] = next++ % k;
  FoldSplit split;
  for (std::size_t i = 0; i < n; ++i) (fold_of[i] == fold_index ? split.test : split.train).push_back(i);
  return split;
}

AugmentOp parse_augment_op(std::string_view name) {
  if (name == "identity") return AugmentOp::kIdentity;
  if (name == "rot90") return AugmentOp::kRot90;
  if (name == "rot180") return AugmentOp::kRot180;
  if (name == "rot270") return AugmentOp::kRot270;
  if (name == "flip_h") return AugmentOp::kFlipH;
  if (name == "flip_v") return AugmentOp::kFlipV;
  throw ConfigError("unknown augmentation '" + std::string(name) + "'");
}

std::string_view augment_op_name(AugmentOp op) {
  switch (op) {
    case AugmentOp::kIdentity: return "identity";
    case AugmentOp::kRot90: return "rot90";
    case AugmentOp::kRot180: return "rot180";
    case AugmentOp::kRot270: return "rot270";
    case AugmentOp::kFlipH: return "flip_h";
    case AugmentOp::kFlipV: return "flip_v";
  }
  return "identity";
}

namespace {

// Destination coordinates of source pixel (x, y) in a W x H image.
std::pair<std::size_t, std::size_t> map_pixel(std::size_t x, std::size_t y, std::size_t w,
                                              std::size_t h, AugmentOp op) {
  switch (op) {
    case AugmentOp::kIdentity: return {x, y};
    case AugmentOp::kRot90: return {y, w - 1 - x};
    case AugmentOp::kRot180: return {w - 1 - x, h - 1 - y};
    case AugmentOp::kRot270: return {h - 1 - y, x};
    case AugmentOp::kFlipH: return {w - 1 - x, y};
    case AugmentOp::kFlipV: return {x, h - 1 - y};
  }
  return {x, y};
}

bool swaps_axes(AugmentOp op) { return op == AugmentOp::kRot90 || op == AugmentOp::kRot270; }

}  // namespace

Image augment(const Image& image, AugmentOp op) {
  const std::size_t w = image.width, h = image.height;
  Image out = swaps_axes(op) ? Image(h, w, image.channels) : Image(w, h, image.channels);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const auto [dx, dy] = map_pixel(x, y, w, h, op);
      for (std::size_t c = 0; c < image.channels; ++c) out.at(dx, dy, c) = image.at(x, y, c);
    }
  }
  return out;
}

Box augment_box(const Box& b, std::size_t width, std::size_t height, AugmentOp op) {
  const double w = double(width), h = double(height);
  switch (op) {
    case AugmentOp::kIdentity: return b;
    case AugmentOp::kRot90: return {b.y_min, w - b.x_max, b.y_max, w - b.x_min};
    case AugmentOp::kRot180: return {w - b.x_max, h - b.y_max, w - b.x_min, h - b.y_min};
    case AugmentOp::kRot270: return {h - b.y_max, b.x_min, h - b.y_min, b.x_max};
    case AugmentOp::kFlipH: return {w - b.x_max, b.y_min, w - b.x_min, b.y_max};
    case AugmentOp::kFlipV: return {b.x_min, h - b.y_max, b.x_max, h - b.y_min};
  }
  return b;
}

}  // namespace insloc
