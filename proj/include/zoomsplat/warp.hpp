// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "zoomsplat/camera.hpp"
#include "zoomsplat/image.hpp"

#include <optional>
#include <span>

namespace zoomsplat {

/// Relative depth disagreement tolerated before a sample counts as occluded.
inline constexpr double kDefaultOcclusionTol = 0.05;

struct Reprojection {
    Vec2 pixel;
    double depth; // camera-space depth in the destination frame
};

/// Move a pixel with known depth from `cam_src` into `cam_dst`. Returns
/// nullopt when the point lands behind the destination camera.
std::optional<Reprojection> reproject_pixel(const Vec2 &pixel, double depth_value,
                                            const Camera &cam_src, const Camera &cam_dst);

struct WarpResult {
    ImageBuffer warped;          // zero where invalid
    ImageBuffer valid_mask;      // 1 channel, exactly 0 or 1
    DepthMap reprojected_depth;  // destination points' depth in the source frame
};

/// Backward warp of `source` into the destination view. Every destination
/// pixel with positive depth is reprojected into the source and sampled
/// bilinearly when it lands inside the image and its depth agrees with
/// depth_src within occlusion_tol (relative).
WarpResult warp_image(const ImageBuffer &source, const DepthMap &depth_src,
                      const DepthMap &depth_dst, const Camera &cam_src, const Camera &cam_dst,
                      double occlusion_tol = kDefaultOcclusionTol);

struct WarpFrame {
    ImageBuffer image;
    DepthMap depth;
    Camera camera;
};

/// Mean masked L1 between each frame and its predecessor warped into it.
double warp_consistency_error(std::span<const WarpFrame> frames,
                              double occlusion_tol = kDefaultOcclusionTol);

} // namespace zoomsplat
