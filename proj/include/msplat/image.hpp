// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace msplat {

/// Interleaved h x w x c image of doubles.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  [[nodiscard]] std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  [[nodiscard]] std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  [[nodiscard]] double at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }
  double& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  [[nodiscard]] bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

/// 8-bit PNG; values are clamped to [0, 1] and rounded. 1 or 3 channels.
void write_png8(const Image& img, const std::filesystem::path& path);
/// Reads 8- or 16-bit gray/RGB(A) PNGs into [0, 1]; alpha is dropped.
[[nodiscard]] Image read_png(const std::filesystem::path& path);

/// Single-channel 16-bit PNG storing round(value / scale).
void write_png16(const Image& img, double scale, const std::filesystem::path& path);
/// Inverse of write_png16: returns raw 16-bit values times `scale`.
[[nodiscard]] Image read_png16(const std::filesystem::path& path, double scale);

/// Raw little-endian float32, interleaved, no header.
void write_raw_f32(const Image& img, const std::filesystem::path& path);
[[nodiscard]] Image read_raw_f32(const std::filesystem::path& path, int width, int height,
                                 int channels);

}  // namespace msplat
