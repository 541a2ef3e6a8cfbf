// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "zoomsplat/warp.hpp"

#include "zoomsplat/error.hpp"

#include <cmath>

namespace zoomsplat {

namespace {

// Landing points this close to a pixel center (or to the border) snap onto it.
constexpr double kSnap = 1e-6;

double snap(double v) {
    const double r = std::round(v);
    return std::abs(v - r) < kSnap ? r : v;
}

struct BilinearTaps {
    int x0, y0, x1, y1;
    double fx, fy;
};

std::optional<BilinearTaps> bilinear_taps(double u, double v, int width, int height) {
    u = snap(u);
    v = snap(v);
    if (!(u >= 0.0 && v >= 0.0 && u <= width - 1 && v <= height - 1)) {
        return std::nullopt;
    }
    BilinearTaps t;
    t.x0 = static_cast<int>(std::floor(u));
    t.y0 = static_cast<int>(std::floor(v));
    t.fx = u - t.x0;
    t.fy = v - t.y0;
    t.x1 = std::min(t.x0 + 1, width - 1);
    t.y1 = std::min(t.y0 + 1, height - 1);
    return t;
}

} // namespace

std::optional<Reprojection> reproject_pixel(const Vec2 &pixel, double depth_value,
                                            const Camera &cam_src, const Camera &cam_dst) {
    if (!(depth_value > 0.0) || !std::isfinite(depth_value)) {
        throw InvalidParameter("reprojection needs a positive finite depth");
    }
    const Vec3 world = cam_src.to_world(cam_src.unproject(pixel, depth_value));
    const Vec3 cam = cam_dst.to_camera(world);
    if (!(cam.z() > 0.0)) {
        return std::nullopt;
    }
    return Reprojection{*cam_dst.project(cam), cam.z()};
}

WarpResult warp_image(const ImageBuffer &source, const DepthMap &depth_src,
                      const DepthMap &depth_dst, const Camera &cam_src, const Camera &cam_dst,
                      double occlusion_tol) {
    if (source.width() != cam_src.width || source.height() != cam_src.height ||
        depth_src.width() != cam_src.width || depth_src.height() != cam_src.height) {
        throw InvalidParameter("source raster and depth must match the source camera");
    }
    if (depth_dst.width() != cam_dst.width || depth_dst.height() != cam_dst.height) {
        throw InvalidParameter("destination depth must match the destination camera");
    }
    if (!(occlusion_tol >= 0.0)) {
        throw InvalidParameter("occlusion tolerance must be non-negative");
    }
    const int w = cam_dst.width, h = cam_dst.height, ch = source.channels();
    WarpResult out{ImageBuffer(w, h, ch), ImageBuffer(w, h, 1), DepthMap(w, h)};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double d = depth_dst.at(x, y);
            if (!(d > 0.0)) {
                continue;
            }
            const auto rp = reproject_pixel(Vec2(x, y), d, cam_dst, cam_src);
            if (!rp) {
                continue;
            }
            out.reprojected_depth.at(x, y) = rp->depth;
            const auto taps = bilinear_taps(rp->pixel.x(), rp->pixel.y(), cam_src.width, cam_src.height);
            if (!taps) {
                continue;
            }
            const double d00 = depth_src.at(taps->x0, taps->y0);
            const double d10 = depth_src.at(taps->x1, taps->y0);
            const double d01 = depth_src.at(taps->x0, taps->y1);
            const double d11 = depth_src.at(taps->x1, taps->y1);
            const double w00 = (1 - taps->fx) * (1 - taps->fy), w10 = taps->fx * (1 - taps->fy);
            const double w01 = (1 - taps->fx) * taps->fy, w11 = taps->fx * taps->fy;
            // Taps with zero weight do not need valid depth.
            if ((w00 > 0.0 && !(d00 > 0.0)) || (w10 > 0.0 && !(d10 > 0.0)) ||
                (w01 > 0.0 && !(d01 > 0.0)) || (w11 > 0.0 && !(d11 > 0.0))) {
                continue;
            }
            const double sampled_depth = w00 * d00 + w10 * d10 + w01 * d01 + w11 * d11;
            if (std::abs(rp->depth - sampled_depth) > occlusion_tol * sampled_depth) {
                continue;
            }
            for (int c = 0; c < ch; ++c) {
                out.warped.at(x, y, c) = w00 * source.at(taps->x0, taps->y0, c) +
                                         w10 * source.at(taps->x1, taps->y0, c) +
                                         w01 * source.at(taps->x0, taps->y1, c) +
                                         w11 * source.at(taps->x1, taps->y1, c);
            }
            out.valid_mask.at(x, y) = 1.0;
        }
    }
    return out;
}

double warp_consistency_error(std::span<const WarpFrame> frames, double occlusion_tol) {
    if (frames.size() < 2) {
        throw InvalidParameter("consistency needs at least two frames");
    }
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 1; k < frames.size(); ++k) {
        const auto &prev = frames[k - 1];
        const auto &cur = frames[k];
        if (prev.image.channels() != cur.image.channels()) {
            throw InvalidParameter("frames must share a channel count");
        }
        const auto wr = warp_image(prev.image, prev.depth, cur.depth, prev.camera, cur.camera,
                                   occlusion_tol);
        for (int y = 0; y < cur.image.height(); ++y) {
            for (int x = 0; x < cur.image.width(); ++x) {
                if (wr.valid_mask.at(x, y) == 0.0) {
                    continue;
                }
                for (int c = 0; c < cur.image.channels(); ++c) {
                    sum += std::abs(wr.warped.at(x, y, c) - cur.image.at(x, y, c));
                    ++count;
                }
            }
        }
    }
    if (count == 0) {
        throw UndefinedMetric("no valid warped pixels in the sequence");
    }
    return sum / static_cast<double>(count);
}

} // namespace zoomsplat
