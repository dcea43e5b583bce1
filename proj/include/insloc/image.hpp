/*
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "insloc/tensor.hpp"

namespace insloc {

/// 8-bit interleaved raster; channels is 1 (gray) or 3 (RGB).
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::size_t c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), pixels(w * h * c, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c = 0) {
    return pixels[(y * width + x) * channels + c];
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }
  bool empty() const noexcept { return pixels.empty(); }

  bool operator==(const Image&) const = default;
};

/// Encodes 8-bit gray or RGB without interlacing; output is deterministic.
std::string encode_png(const Image& image);
/// Decodes any 8-bit gray, gray+alpha, RGB or RGBA PNG; alpha is dropped.
Image decode_png(std::string_view bytes);

void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

/// [1, C, H, W] tensor with values pixel / 255 - 0.5.
Tensor image_to_tensor(const Image& image);

/// Sub-rectangle [x0, x0 + w) x [y0, y0 + h); parts outside the source are zero.
Image crop_image(const Image& image, long x0, long y0, std::size_t w, std::size_t h);

}  // namespace insloc
