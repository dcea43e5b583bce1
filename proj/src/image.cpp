/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include "insloc/image.hpp"

#include <png.h>

#include <csetjmp>
#include <cstring>

#include "insloc/checkpoint.hpp"
#include "insloc/error.hpp"

namespace insloc {

namespace {

struct PngWriteBuffer {
  std::string bytes;
};

void png_write_cb(png_structp png, png_bytep data, png_size_t length) {
  auto* buf = static_cast<PngWriteBuffer*>(png_get_io_ptr(png));
  buf->bytes.append(reinterpret_cast<const char*>(data), length);
}

void png_flush_cb(png_structp) {}

struct PngReadCursor {
  std::string_view bytes;
  std::size_t pos = 0;
};

void png_read_cb(png_structp png, png_bytep data, png_size_t length) {
  auto* cur = static_cast<PngReadCursor*>(png_get_io_ptr(png));
  if (cur->bytes.size() - cur->pos < length) png_error(png, "truncated PNG data");
  std::memcpy(data, cur->bytes.data() + cur->pos, length);
  cur->pos += length;
}

thread_local std::string png_last_error;

[[noreturn]] void png_error_cb(png_structp png, png_const_charp msg) {
  png_last_error = msg;
  png_longjmp(png, 1);
}

void png_warning_cb(png_structp, png_const_charp) {}

}  // namespace

std::string encode_png(const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw FormatError("encode_png: only gray or RGB images are supported");
  }
  if (image.width == 0 || image.height == 0) throw FormatError("encode_png: empty image");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_cb,
                                            png_warning_cb);
  png_infop info = png_create_info_struct(png);
  PngWriteBuffer buf;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("PNG: " + png_last_error);
  }
  {
    png_set_write_fn(png, &buf, png_write_cb, png_flush_cb);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
                 static_cast<png_uint_32>(image.height), 8,
                 image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = image.width * image.channels;
    for (std::size_t y = 0; y < image.height; ++y) {
      png_write_row(png, const_cast<png_bytep>(image.pixels.data() + y * stride));
    }
    png_write_end(png, nullptr);
  }
  png_destroy_write_struct(&png, &info);
  return std::move(buf.bytes);
}

Image decode_png(std::string_view bytes) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8)) {
    throw FormatError("not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_cb,
                                           png_warning_cb);
  png_infop info = png_create_info_struct(png);
  PngReadCursor cur{bytes, 0};
  Image out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("PNG: " + png_last_error);
  }
  {
    png_set_read_fn(png, &cur, png_read_cb);
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
      png_set_expand_gray_1_2_4_to_8(png);
    }
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    out.width = png_get_image_width(png, info);
    out.height = png_get_image_height(png, info);
    out.channels = png_get_channels(png, info);
    out.pixels.resize(out.width * out.height * out.channels);
    rows.resize(out.height);
    for (std::size_t y = 0; y < out.height; ++y) {
      rows[y] = out.pixels.data() + y * out.width * out.channels;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  write_file_atomic(path, encode_png(image));
}

Image read_png(const std::filesystem::path& path) { return decode_png(read_file(path)); }

Tensor image_to_tensor(const Image& image) {
  Tensor t({1, image.channels, image.height, image.width});
  const std::size_t plane = image.width * image.height;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < image.channels; ++c) {
      t[c * plane + i] = image.pixels[i * image.channels + c] / 255.0 - 0.5;
    }
  }
  return t;
}

Image crop_image(const Image& image, long x0, long y0, std::size_t w, std::size_t h) {
  Image out(w, h, image.channels, 0);
  for (std::size_t y = 0; y < h; ++y) {
    const long sy = y0 + static_cast<long>(y);
    if (sy < 0 || sy >= static_cast<long>(image.height)) continue;
    for (std::size_t x = 0; x < w; ++x) {
      const long sx = x0 + static_cast<long>(x);
      if (sx < 0 || sx >= static_cast<long>(image.width)) continue;
      for (std::size_t c = 0; c < image.channels; ++c) {
        out.at(x, y, c) = image.at(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy), c);
      }
    }
  }
  return out;
}

}  // namespace insloc
