// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "zoomsplat/loss.hpp"

#include "zoomsplat/error.hpp"
#include "zoomsplat/metrics.hpp"
#include "zoomsplat/resample.hpp"

#include <cmath>

namespace zoomsplat {

void LossWeights::validate() const {
    if (!(lambda_hr >= 0.0) || !(lambda_lr >= 0.0) || !(lambda_geo >= 0.0) ||
        !(lambda_dssim >= 0.0) || lambda_dssim > 1.0) {
        throw InvalidParameter("loss weights must be non-negative (lambda_dssim <= 1)");
    }
}

ImageLoss rgb_loss(const ImageBuffer &rendered, const ImageBuffer &target, double lambda_dssim) {
    if (!rendered.same_shape(target) || rendered.empty()) {
        throw InvalidParameter("rgb_loss inputs must have identical dimensions");
    }
    ImageLoss out;
    out.grad = ImageBuffer(rendered.width(), rendered.height(), rendered.channels());
    const auto r = rendered.data();
    const auto t = target.data();
    auto g = out.grad.data();
    const double n = static_cast<double>(r.size());
    double l1 = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        const double d = r[i] - t[i];
        l1 += std::abs(d);
        g[i] = (1.0 - lambda_dssim) * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / n;
    }
    out.value = (1.0 - lambda_dssim) * l1 / n;
    if (lambda_dssim > 0.0) {
        const auto s = ssim_with_gradient(rendered, target);
        out.value += lambda_dssim * (1.0 - s.value) * 0.5;
        const auto gs = s.grad_a.data();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] -= 0.5 * lambda_dssim * gs[i];
        }
    }
    return out;
}

ImageBuffer degrade_downsample(const ImageBuffer &image, int factor) {
    return bicubic_downsample(image, factor);
}

DualScaleLoss dual_scale_loss(const ImageBuffer &render_hr, const ImageBuffer &target_hr,
                              const ImageBuffer *lr_input, const LossWeights &weights, int factor,
                              double geo_value) {
    weights.validate();
    if (!render_hr.same_shape(target_hr)) {
        throw InvalidParameter("HR render and target must have identical dimensions");
    }
    DualScaleLoss out;
    const auto hr = rgb_loss(render_hr, target_hr, weights.lambda_dssim);
    out.hr = hr.value;
    out.grad_hr = hr.grad;
    for (double &v : out.grad_hr.data()) {
        v *= weights.lambda_hr;
    }
    if (lr_input) {
        if (factor < 1 || lr_input->width() * factor != render_hr.width() ||
            lr_input->height() * factor != render_hr.height() ||
            lr_input->channels() != render_hr.channels()) {
            throw InvalidParameter("LR input must be the HR resolution divided by the zoom factor");
        }
        const auto degraded = degrade_downsample(render_hr, factor);
        const auto lr = rgb_loss(degraded, *lr_input, weights.lambda_dssim);
        out.lr = lr.value;
        ImageBuffer g_low = lr.grad;
        for (double &v : g_low.data()) {
            v *= weights.lambda_lr;
        }
        const auto g_up = bicubic_downsample_adjoint(g_low, factor);
        auto dst = out.grad_hr.data();
        const auto src = g_up.data();
        for (std::size_t i = 0; i < dst.size(); ++i) {
            dst[i] += src[i];
        }
    }
    out.geo = geo_value;
    out.total = weights.lambda_hr * out.hr + weights.lambda_lr * out.lr + weights.lambda_geo * out.geo;
    return out;
}

} // namespace zoomsplat
