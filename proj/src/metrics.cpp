// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include "msplat/metrics.hpp"

#include "msplat/errors.hpp"

#include <array>
#include <cmath>

namespace msplat {

namespace {

constexpr int kRadius = 5;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, 2 * kRadius + 1> window() {
  std::array<double, 2 * kRadius + 1> w{};
  double sum = 0.0;
  for (int k = -kRadius; k <= kRadius; ++k) {
    w[k + kRadius] = std::exp(-(k * k) / (2.0 * kSigma * kSigma));
    sum += w[k + kRadius];
  }
  for (auto& v : w) v /= sum;
  return w;
}

/// Separable zero-padded "same" convolution of a single-channel plane.
std::vector<double> blur(const std::vector<double>& src, int width, int height) {
  static const auto w = window();
  std::vector<double> tmp(src.size(), 0.0);
  std::vector<double> out(src.size(), 0.0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int k = -kRadius; k <= kRadius; ++k) {
        const int xx = x + k;
        if (xx >= 0 && xx < width) acc += w[k + kRadius] * src[static_cast<std::size_t>(y) * width + xx];
      }
      tmp[static_cast<std::size_t>(y) * width + x] = acc;
    }
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int k = -kRadius; k <= kRadius; ++k) {
        const int yy = y + k;
        if (yy >= 0 && yy < height) acc += w[k + kRadius] * tmp[static_cast<std::size_t>(yy) * width + x];
      }
      out[static_cast<std::size_t>(y) * width + x] = acc;
    }
  }
  return out;
}

std::vector<double> plane(const Image& img, int c) {
  std::vector<double> out(img.pixel_count());
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = img.data[p * img.channels + c];
  return out;
}

void check_shapes(const Image& a, const Image& b, const char* who) {
  if (!a.same_shape(b)) {
    throw InvalidArgument(std::string(who) + ": image shapes differ (" + std::to_string(a.width) +
                          "x" + std::to_string(a.height) + "x" + std::to_string(a.channels) +
                          " vs " + std::to_string(b.width) + "x" + std::to_string(b.height) + "x" +
                          std::to_string(b.channels) + ")");
  }
  if (a.data.empty()) {
    throw InvalidArgument(std::string(who) + ": empty images");
  }
}

SsimResult ssim_impl(const Image& x, const Image& y, bool want_grad) {
  check_shapes(x, y, "ssim");
  const int W = x.width, H = x.height;
  const std::size_t n = x.pixel_count();
  const double inv_count = 1.0 / static_cast<double>(n * x.channels);
  SsimResult res;
  if (want_grad) res.gradient = Image(W, H, x.channels);

  double total = 0.0;
  for (int c = 0; c < x.channels; ++c) {
    const auto px = plane(x, c);
    const auto py = plane(y, c);
    std::vector<double> xx(n), yy(n), xy(n);
    for (std::size_t p = 0; p < n; ++p) {
      xx[p] = px[p] * px[p];
      yy[p] = py[p] * py[p];
      xy[p] = px[p] * py[p];
    }
    const auto mx = blur(px, W, H);
    const auto my = blur(py, W, H);
    const auto exx = blur(xx, W, H);
    const auto eyy = blur(yy, W, H);
    const auto exy = blur(xy, W, H);

    std::vector<double> ga, gb, gc;
    if (want_grad) {
      ga.resize(n);
      gb.resize(n);
      gc.resize(n);
    }
    for (std::size_t p = 0; p < n; ++p) {
      const double sxx = exx[p] - mx[p] * mx[p];
      const double syy = eyy[p] - my[p] * my[p];
      const double sxy = exy[p] - mx[p] * my[p];
      const double a1 = 2.0 * mx[p] * my[p] + kC1;
      const double a2 = 2.0 * sxy + kC2;
      const double b1 = mx[p] * mx[p] + my[p] * my[p] + kC1;
      const double b2 = sxx + syy + kC2;
      const double s = (a1 * a2) / (b1 * b2);
      total += s;
      if (want_grad) {
        const double ds_dmx = 2.0 * my[p] * a2 / (b1 * b2) - s * 2.0 * mx[p] / b1;
        const double ds_dsxx = -s / b2;
        const double ds_dsxy = 2.0 * a1 / (b1 * b2);
        ga[p] = (ds_dmx - 2.0 * mx[p] * ds_dsxx - my[p] * ds_dsxy) * inv_count;
        gb[p] = ds_dsxx * inv_count;
        gc[p] = ds_dsxy * inv_count;
      }
    }
    if (want_grad) {
      // The zero-padded symmetric blur is its own adjoint.
      const auto ba = blur(ga, W, H);
      const auto bb = blur(gb, W, H);
      const auto bc = blur(gc, W, H);
      for (std::size_t p = 0; p < n; ++p) {
        res.gradient.data[p * x.channels + c] = ba[p] + 2.0 * px[p] * bb[p] + py[p] * bc[p];
      }
    }
  }
  res.value = total * inv_count;
  return res;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  check_shapes(a, b, "psnr");
  double se = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.data.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) { return ssim_impl(a, b, false).value; }

SsimResult ssim_with_gradient(const Image& x, const Image& y) { return ssim_impl(x, y, true); }

}  // namespace msplat
