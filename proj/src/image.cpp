// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "msplat/image.hpp"

#include "msplat/errors.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>

namespace msplat {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) {
    throw IoError(std::string("cannot open ") + path.string());
  }
  return f;
}

void write_png_rows(const std::filesystem::path& path, int width, int height, int color_type,
                    int bit_depth, std::vector<png_bytep>& rows) {
  auto f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng init failed for " + path.string());
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG write failed: " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

struct RawPng {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 8;
  std::vector<std::uint16_t> samples;
};

RawPng read_png_raw(const std::filesystem::path& path) {
  auto f = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng init failed for " + path.string());
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("PNG read failed: " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (png_get_bit_depth(png, info) == 16) png_set_swap(png);
  png_read_update_info(png, info);

  RawPng out;
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<unsigned char> buf(rowbytes * out.height);
  std::vector<png_bytep> rows(out.height);
  for (int y = 0; y < out.height; ++y) rows[y] = buf.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t n = static_cast<std::size_t>(out.width) * out.height * out.channels;
  out.samples.resize(n);
  if (out.bit_depth == 16) {
    for (int y = 0; y < out.height; ++y) {
      const auto* src = reinterpret_cast<const std::uint16_t*>(rows[y]);
      std::copy_n(src, static_cast<std::size_t>(out.width) * out.channels,
                  out.samples.begin() + static_cast<std::ptrdiff_t>(y) * out.width * out.channels);
    }
  } else {
    for (int y = 0; y < out.height; ++y) {
      for (int k = 0; k < out.width * out.channels; ++k) {
        out.samples[static_cast<std::size_t>(y) * out.width * out.channels + k] = rows[y][k];
      }
    }
  }
  return out;
}

}  // namespace

void write_png8(const Image& img, const std::filesystem::path& path) {
  if (img.channels != 1 && img.channels != 3) {
    throw InvalidArgument("write_png8: only 1 or 3 channels supported");
  }
  const int stride = img.width * img.channels;
  std::vector<unsigned char> buf(static_cast<std::size_t>(stride) * img.height);
  for (std::size_t i = 0; i < buf.size(); ++i) {
    buf[i] = static_cast<unsigned char>(std::lround(std::clamp(img.data[i], 0.0, 1.0) * 255.0));
  }
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) rows[y] = buf.data() + static_cast<std::size_t>(y) * stride;
  write_png_rows(path, img.width, img.height,
                 img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, 8, rows);
}

Image read_png(const std::filesystem::path& path) {
  const RawPng raw = read_png_raw(path);
  const int keep = (raw.channels == 2 || raw.channels == 1) ? 1 : 3;
  const double denom = raw.bit_depth == 16 ? 65535.0 : 255.0;
  Image img(raw.width, raw.height, keep);
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    for (int c = 0; c < keep; ++c) {
      img.data[p * keep + c] = raw.samples[p * raw.channels + c] / denom;
    }
  }
  return img;
}

void write_png16(const Image& img, double scale, const std::filesystem::path& path) {
  if (img.channels != 1) {
    throw InvalidArgument("write_png16: single-channel images only");
  }
  if (!(scale > 0.0)) {
    throw InvalidArgument("write_png16: scale must be positive");
  }
  std::vector<std::uint16_t> buf(img.pixel_count());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const double v = std::round(img.data[i] / scale);
    buf[i] = static_cast<std::uint16_t>(std::clamp(v, 0.0, 65535.0));
  }
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) {
    rows[y] = reinterpret_cast<png_bytep>(buf.data() + static_cast<std::size_t>(y) * img.width);
  }
  write_png_rows(path, img.width, img.height, PNG_COLOR_TYPE_GRAY, 16, rows);
}

Image read_png16(const std::filesystem::path& path, double scale) {
  const RawPng raw = read_png_raw(path);
  if (raw.bit_depth != 16 || raw.channels != 1) {
    throw ValidationError(path.string() + ": expected a single-channel 16-bit PNG");
  }
  Image img(raw.width, raw.height, 1);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) img.data[i] = raw.samples[i] * scale;
  return img;
}

void write_raw_f32(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  std::vector<float> buf(img.data.begin(), img.data.end());
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

Image read_raw_f32(const std::filesystem::path& path, int width, int height, int channels) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  Image img(width, height, channels);
  const auto expected = static_cast<std::streamsize>(img.data.size() * sizeof(float));
  if (in.tellg() != expected) {
    throw ValidationError(path.string() + ": size " + std::to_string(in.tellg()) +
                          " bytes, expected " + std::to_string(expected) + " for " +
                          std::to_string(width) + "x" + std::to_string(height) + "x" +
                          std::to_string(channels));
  }
  in.seekg(0);
  std::vector<float> buf(img.data.size());
  in.read(reinterpret_cast<char*>(buf.data()), expected);
  std::copy(buf.begin(), buf.end(), img.data.begin());
  return img;
}

}  // namespace msplat
