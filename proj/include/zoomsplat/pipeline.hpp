// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "zoomsplat/io.hpp"
#include "zoomsplat/optimizer.hpp"
#include "zoomsplat/sr.hpp"
#include "zoomsplat/warp.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace zoomsplat {

struct PipelineConfig {
    int zoom_factor_s = 4;
    int num_zoom_steps = 1;
    LossWeights weights{};
    std::size_t base_iterations = 2000;
    std::size_t step_iterations = 500;
    int neighbor_count = 2;
    SrProviderKind sr_provider = SrProviderKind::builtin;
    std::string sr_endpoint;
    std::string static_prompt = std::string(kDefaultPrompt);
    std::uint64_t rng_seed = 0;
    double occlusion_tol = kDefaultOcclusionTol;
    double min_footprint_px = 2.0;
    std::size_t fallback_seed_count = 10000;
    double prune_threshold = 0.005;
    int sh_degree = 1;
    LearningRates rates{};
    RenderOptions render{};

    void validate() const;
};

/// Unknown keys are ignored with a warning; malformed values throw LoadError.
PipelineConfig pipeline_config_from_map(const ConfigMap &map);
ConfigMap pipeline_config_to_map(const PipelineConfig &config);

struct SupervisionSet {
    std::vector<Camera> cameras;
    std::vector<ImageBuffer> images;
};

struct ZoomState {
    Scene scene;
    int current_level = 0;
    std::vector<SupervisionSet> supervision; // one entry per level
    Roi roi;
    std::vector<Camera> base_cameras;

    /// Throws InvariantViolation when the layer stack does not match the level.
    void validate() const;
};

/// Least-squares intersection of the optical axes, pulled toward the camera
/// centroid until it lies inside every frustum. Radius is a tenth of the
/// median camera distance.
Roi compute_roi(std::span<const Camera> cameras);

bool inside_frustum(const Camera &camera, const Vec3 &point);

/// Base cameras turned in place to look at the ROI with focals scaled by s^level.
/// Cameras with the ROI behind them are dropped.
std::vector<Camera> make_zoom_cameras(std::span<const Camera> base_cameras, const Roi &roi,
                                      int level, int s);

/// 1.1 x the largest camera distance from the camera centroid.
double camera_extent(std::span<const Camera> cameras);

/// One primitive per point: isotropic scale from the 3 nearest neighbours,
/// opacity 0.1, color from the point or mid-gray. Primitives are unassigned.
std::vector<GaussianPrimitive> primitives_from_points(std::span<const SparsePoint> points,
                                                      int sh_degree);

/// Scene with one active layer made from `primitives`, stamped against `cameras`.
Scene make_base_scene(std::vector<GaussianPrimitive> primitives, int sh_degree,
                      std::span<const Camera> cameras);

ZoomState make_zoom_state(Scene scene, std::vector<Camera> cameras, std::vector<ImageBuffer> images);

TrainingReport train_base(ZoomState &state, const PipelineConfig &config);

struct StepRecord {
    std::vector<Camera> cameras;           // level k+1 rig
    std::vector<ImageBuffer> coarse;       // level k renders
    std::vector<ImageBuffer> sr_outputs;   // full super-resolved frames
    std::vector<ImageBuffer> targets;      // level k+1 supervision crops
    std::vector<ImageBuffer> anchors;      // level k centre crops used as LR input
    std::string prompt;
    TrainingReport report;
};

/// Render, warp, prompt, super-resolve, add a layer and optimize it. The state
/// is only replaced when every stage succeeds.
void zoom_step(ZoomState &state, const PipelineConfig &config, SrProvider &provider,
               StepRecord *record = nullptr);

/// Focal multipliers spaced geometrically from range.first to range.second.
std::vector<double> focal_sweep(std::pair<double, double> range, int frame_count);

std::vector<ImageBuffer> render_trajectory(const Scene &scene, std::pair<double, double> focal_range,
                                           int frame_count, const Camera &camera_path,
                                           const RenderOptions &options);

/// Crop of `w` x `h` pixels whose top-left pixel centre sits at (x0, y0).
/// Fractional offsets are resampled with the bicubic kernel.
ImageBuffer crop(const ImageBuffer &image, double x0, double y0, int w, int h);

} // namespace zoomsplat
