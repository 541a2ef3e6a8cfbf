// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "zoomsplat/camera.hpp"
#include "zoomsplat/image.hpp"
#include "zoomsplat/lod.hpp"
#include "zoomsplat/scene.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace zoomsplat {

struct RenderOptions {
    Vec3 background_color = Vec3::Zero();
    int tile_size = 16;
    /// Contributions with alpha below this are skipped.
    double alpha_cutoff = 1.0 / 255.0;
    /// Expected depth is reported only where accumulated alpha reaches this.
    double depth_alpha_floor = 0.5;
    bool lod_enabled = true;
    LodConfig lod{};
    /// Screen-space support radius in standard deviations.
    double cull_sigma = 3.0;
    /// Per-pixel early exit once transmittance drops below this.
    double min_transmittance = 1e-4;
    /// Tile workers; 0 picks the hardware concurrency.
    int workers = 0;

    void validate() const;
};

struct RenderOutput {
    ImageBuffer color; // 3 channels
    DepthMap depth;    // alpha-weighted expected camera-space depth
    ImageBuffer alpha; // 1 channel
};

/// Screen-space record of one visible primitive.
struct Splat {
    PrimitiveId id = 0;
    Vec2 mean = Vec2::Zero();
    Mat2 conic = Mat2::Identity(); // inverse of the floored 2D covariance
    double opacity = 0.0;          // effective (LoD-modulated) opacity
    Vec3 color = Vec3::Zero();
    double depth = 0.0;
    Vec2 extent = Vec2::Zero(); // half-widths of the cull ellipse's bounding box
};

/// Project every layer-owned primitive in front of the near plane with a
/// non-zero effective opacity. Output order follows primitive id.
std::vector<Splat> project_scene(const Scene &scene, const Camera &camera,
                                 const RenderOptions &options);

struct TileBins {
    int tile_size = 16;
    int tiles_x = 0;
    int tiles_y = 0;
    /// Per tile (row-major), indices into the splat array in front-to-back
    /// order; equal depths are ordered by primitive id.
    std::vector<std::vector<std::uint32_t>> tiles;
};

TileBins sort_and_bin(std::span<const Splat> splats, const Camera &camera,
                      const RenderOptions &options);

/// Tile-parallel forward rasterization.
RenderOutput render(const Scene &scene, const Camera &camera, const RenderOptions &options);

/// Single-threaded global-sort rasterizer; every pixel visits every splat.
RenderOutput render_reference(const Scene &scene, const Camera &camera,
                              const RenderOptions &options);

/// Per-primitive parameter gradients, indexed by primitive id.
struct SceneGradients {
    std::vector<Vec3> center;
    std::vector<Vec3> log_scale;
    std::vector<Vec4> rotation;
    std::vector<double> opacity_logit;
    std::vector<std::vector<Vec3>> sh;

    static SceneGradients zeros_like(const Scene &scene);
    SceneGradients &operator+=(const SceneGradients &other);
    /// Largest absolute component over all parameters.
    double max_abs() const;
};

/// dL/dparams given dL/dcolor for the rendered color image.
SceneGradients render_backward(const Scene &scene, const Camera &camera,
                               const RenderOptions &options, const ImageBuffer &grad_color);

struct GeoRegularizer {
    double value = 0.0;
    std::size_t pixel_count = 0; // pixels entering the average
    SceneGradients gradients;
};

/// Depth-distortion surrogate: mean over pixels with alpha > 0.5 of
/// sum_i sum_j w_i w_j |d_i - d_j| with w_i = T_i alpha_i. `mask`
/// (1 channel, nonzero = include) overrides the alpha test when given.
GeoRegularizer geo_regularizer(const Scene &scene, const Camera &camera,
                               const RenderOptions &options, const ImageBuffer *mask = nullptr);

/// Forward render plus the combined backward pass of a color loss and a
/// weighted geometry term, in one traversal.
struct RenderWithGradients {
    RenderOutput output;
    SceneGradients gradients;
    double geo_value = 0.0;
    std::size_t geo_pixels = 0;
};

RenderWithGradients render_backward_combined(const Scene &scene, const Camera &camera,
                                             const RenderOptions &options,
                                             const ImageBuffer *grad_color, double geo_weight,
                                             const ImageBuffer *geo_mask = nullptr);

/// Pixels entering the geometry term: alpha > 0.5.
ImageBuffer geo_mask_from_alpha(const ImageBuffer &alpha);

} // namespace zoomsplat
