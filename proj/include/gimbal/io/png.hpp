#pragma once

// PNG read/write through libpng. Samples map linearly between [0, 1] and the
// integer range of the chosen bit depth; no gamma linearization is applied.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "gimbal/error.hpp"
#include "gimbal/raster.hpp"

namespace gimbal::io {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] inline void png_error_fn(png_structp png, png_const_charp msg) {
  auto* slot = static_cast<std::string*>(png_get_error_ptr(png));
  if (slot) *slot = msg;
  png_longjmp(png, 1);
}

inline void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace detail

/// Reads gray, gray+alpha, RGB or RGBA PNGs at 8 or 16 bits (palette and
/// low-bit-depth images are expanded). Returns one channel per PNG channel.
template <typename Tag>
Raster<Tag> read_png(const std::string& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path);

  std::string err;
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_fn, detail::png_warning_fn);
  if (!png) throw IoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  int width = 0, height = 0, channels = 0, depth = 0;
  std::vector<unsigned char> pixels;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("decoding " + path + ": " + err);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_expand(png);
  if (png_get_bit_depth(png, info) == 16) png_set_swap(png);  // host-order u16 below
  png_read_update_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  channels = png_get_channels(png, info);
  depth = png_get_bit_depth(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  pixels.resize(stride * height);
  rows.resize(height);
  for (int y = 0; y < height; ++y) rows[y] = pixels.data() + stride * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Raster<Tag> out(channels, height, width);
  const double maxv = depth == 16 ? 65535.0 : 255.0;
  for (int y = 0; y < height; ++y) {
    const unsigned char* row = pixels.data() + stride * y;
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        const std::size_t i = static_cast<std::size_t>(x) * channels + c;
        double v;
        if (depth == 16) {
          unsigned short s;
          std::memcpy(&s, row + 2 * i, 2);
          v = s;
        } else {
          v = row[i];
        }
        out(c, y, x) = v / maxv;
      }
    }
  }
  return out;
}

/// Writes 1 (gray), 2 (gray+alpha), 3 (RGB) or 4 (RGBA) channel rasters.
/// Values are clamped to [0, 1] and rounded to the nearest code.
template <typename Tag>
void write_png(const std::string& path, const Raster<Tag>& img, int bit_depth = 8) {
  if (bit_depth != 8 && bit_depth != 16) throw ConfigError("PNG bit depth must be 8 or 16");
  if (img.channels() < 1 || img.channels() > 4) {
    throw ConfigError("PNG output needs 1 to 4 channels, got " + std::to_string(img.channels()));
  }
  static constexpr int kColorTypes[] = {PNG_COLOR_TYPE_GRAY, PNG_COLOR_TYPE_GRAY_ALPHA,
                                        PNG_COLOR_TYPE_RGB, PNG_COLOR_TYPE_RGBA};
  const int channels = img.channels();
  const int bytes = bit_depth / 8;
  const double maxv = bit_depth == 16 ? 65535.0 : 255.0;
  const std::size_t stride = static_cast<std::size_t>(img.width()) * channels * bytes;
  std::vector<unsigned char> pixels(stride * img.height());
  for (int y = 0; y < img.height(); ++y) {
    unsigned char* row = pixels.data() + stride * y;
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < channels; ++c) {
        const double v = std::isfinite(img(c, y, x)) ? std::clamp(img(c, y, x), 0.0, 1.0) : 0.0;
        const auto code = static_cast<unsigned>(std::lround(v * maxv));
        const std::size_t i = (static_cast<std::size_t>(x) * channels + c) * bytes;
        if (bytes == 2) {
          row[i] = static_cast<unsigned char>(code >> 8);  // PNG is big-endian
          row[i + 1] = static_cast<unsigned char>(code & 0xFF);
        } else {
          row[i] = static_cast<unsigned char>(code);
        }
      }
    }
  }

  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot write " + path);
  std::string err;
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_fn, detail::png_warning_fn);
  if (!png) throw IoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("encoding " + path + ": " + err);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()),
               bit_depth, kColorTypes[channels - 1], PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height(); ++y) png_write_row(png, pixels.data() + stride * y);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace gimbal::io
