// Copyright Contributors to the motionsplat project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "msplat/image.hpp"

namespace msplat {

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) over all channels, capped at 100 dB. Throws
/// InvalidArgument on shape mismatch.
[[nodiscard]] double psnr(const Image& a, const Image& b);

/// Mean SSIM over pixels and channels: 11x11 Gaussian window (sigma 1.5,
/// zero padded), C1 = 0.01^2, C2 = 0.03^2.
[[nodiscard]] double ssim(const Image& a, const Image& b);

/// SSIM of `x` against a fixed reference `y`, plus d(SSIM)/dx.
struct SsimResult {
  double value = 0.0;
  Image gradient;
};
[[nodiscard]] SsimResult ssim_with_gradient(const Image& x, const Image& y);

}  // namespace msplat
