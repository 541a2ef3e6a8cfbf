// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "zoomsplat/image.hpp"

namespace zoomsplat {

/// Reported when two images are identical.
inline constexpr double kPsnrCap = 99.0;

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// 10 log10(1 / MSE) on the [0,1] range, capped at kPsnrCap.
double psnr(const ImageBuffer &a, const ImageBuffer &b);

/// Mean local SSIM over every fully contained 11x11 Gaussian window and
/// every channel.
double ssim(const ImageBuffer &a, const ImageBuffer &b);

struct SsimWithGradient {
    double value = 0.0;
    ImageBuffer grad_a; // d ssim / d a
};

SsimWithGradient ssim_with_gradient(const ImageBuffer &a, const ImageBuffer &b);

} // namespace zoomsplat
