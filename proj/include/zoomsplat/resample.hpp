// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "zoomsplat/image.hpp"

namespace zoomsplat {

/// Keys cubic parameter; -0.5 gives Catmull-Rom. Both the degradation
/// downsample and the reference super-resolution use this kernel.
inline constexpr double kCubicA = -0.5;

/// Unsharp mask applied after bicubic upsampling by the reference SR.
inline constexpr double kUnsharpSigma = 1.0;
inline constexpr double kUnsharpAmount = 0.5;

double cubic_kernel(double x);

/// Reflect-101 border index (…2 1 | 0 1 2 … n-2 n-1 | n-2 …).
int reflect101(int i, int n);

/// Upsample by an integer factor, pixel centers aligned at (i + 0.5) / factor.
ImageBuffer bicubic_upsample(const ImageBuffer &image, int factor);

/// Antialiased decimation: the kernel is stretched by `factor`. Dimensions
/// must be divisible by the factor.
ImageBuffer bicubic_downsample(const ImageBuffer &image, int factor);

/// Transpose of bicubic_downsample, mapping a gradient at the low
/// resolution back to the high-resolution pixels.
ImageBuffer bicubic_downsample_adjoint(const ImageBuffer &grad_low, int factor);

/// Separable Gaussian blur, radius ceil(3 sigma), reflect-101 borders.
ImageBuffer gaussian_blur(const ImageBuffer &image, double sigma);

/// Bicubic sample at a continuous pixel coordinate with reflect-101 borders.
double bicubic_sample(const ImageBuffer &image, double x, double y, int channel);

} // namespace zoomsplat
