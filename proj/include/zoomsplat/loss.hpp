// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "zoomsplat/image.hpp"

namespace zoomsplat {

struct LossWeights {
    double lambda_hr = 0.6;
    double lambda_lr = 0.4;
    double lambda_geo = 0.05;
    /// D-SSIM share inside the RGB loss.
    double lambda_dssim = 0.2;

    void validate() const;
};

struct ImageLoss {
    double value = 0.0;
    ImageBuffer grad; // d value / d rendered
};

/// (1 - lambda_dssim) * mean |rendered - target| + lambda_dssim * (1 - SSIM) / 2.
ImageLoss rgb_loss(const ImageBuffer &rendered, const ImageBuffer &target, double lambda_dssim);

/// Bicubic decimation used to compare high-resolution renders with
/// low-resolution observations.
ImageBuffer degrade_downsample(const ImageBuffer &image, int factor);

struct DualScaleLoss {
    double total = 0.0;
    double hr = 0.0;  // rgb loss on the high-resolution pair
    double lr = 0.0;  // rgb loss after degrading the render
    double geo = 0.0; // geometry regularizer value as passed in
    ImageBuffer grad_hr;
};

/// lambda_hr * rgb(render_hr, target_hr) + lambda_lr * rgb(degrade(render_hr), lr_input)
/// + lambda_geo * geo_value. `lr_input` may be null to drop the LR branch.
/// The gradient covers only the two image branches; the geometry term's
/// parameter gradients come from the renderer.
DualScaleLoss dual_scale_loss(const ImageBuffer &render_hr, const ImageBuffer &target_hr,
                              const ImageBuffer *lr_input, const LossWeights &weights, int factor,
                              double geo_value = 0.0);

} // namespace zoomsplat
