// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "zoomsplat/loss.hpp"
#include "zoomsplat/render.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace zoomsplat {

/// One supervision view. When `lr_input` is set the LR branch compares
/// the degraded render against it.
struct TrainingView {
    ImageBuffer target;
    std::optional<ImageBuffer> lr_input;
    Camera camera;
};

struct ViewLoss {
    DualScaleLoss loss;
    SceneGradients gradients;
};

/// Full render -> loss -> backward composition for one view. `geo_mask`
/// pins the pixel set of the geometry term (otherwise alpha > 0.5).
ViewLoss evaluate_view(const Scene &scene, const TrainingView &view, const LossWeights &weights,
                       int zoom_factor, const RenderOptions &options,
                       const ImageBuffer *geo_mask = nullptr);

/// Per-group Adam step sizes.
struct LearningRates {
    double center = 1.6e-4; // multiplied by the scene extent
    double log_scale = 5e-3;
    double rotation = 1e-3;
    double opacity_logit = 5e-2;
    double sh = 2.5e-3;
    /// Center rate decays exponentially to this fraction by the last step.
    double center_final_fraction = 0.01;
};

struct Schedule {
    std::size_t iterations = 0;
    std::uint64_t seed = 0;
    LearningRates rates{};
    double scene_extent = 1.0;
    int zoom_factor = 4;
    RenderOptions render{};
};

/// Adam moments for the active layer, one flat parameter block per primitive.
class OptimState {
  public:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEpsilon = 1e-15;

    OptimState(std::span<const PrimitiveId> ids, int sh_degree);

    /// Apply one step to every tracked primitive and renormalize rotations.
    void step(Scene &scene, const SceneGradients &grads, const LearningRates &rates,
              double center_rate);

    std::size_t step_count() const noexcept { return step_; }
    std::span<const PrimitiveId> ids() const noexcept { return ids_; }
    bool moments_finite() const;

  private:
    std::vector<PrimitiveId> ids_;
    std::size_t block_ = 0;
    std::vector<double> m_;
    std::vector<double> v_;
    std::size_t step_ = 0;
};

struct IterationRecord {
    std::size_t iteration = 0;
    std::size_t view = 0;
    double total = 0.0;
    double hr = 0.0;
    double lr = 0.0;
    double geo = 0.0;
    double psnr = 0.0;
};

struct TrainingReport {
    std::vector<IterationRecord> iterations;
    std::vector<double> view_psnr; // held-in PSNR per view after training
    double final_psnr = 0.0;

    /// One JSON object per line: iteration, total, hr, lr, geo, psnr.
    std::string to_jsonl() const;
};

/// Adam optimization of the active layer only.
TrainingReport optimize_layer(Scene &scene, std::span<const TrainingView> views,
                              const LossWeights &weights, const Schedule &schedule);

struct SeedOptions {
    double zoom_factor = 4.0;
    /// Projected 3-sigma radius a parent must exceed in some zoom camera.
    double min_footprint_px = 2.0;
    std::size_t fallback_count = 10000;
    std::uint64_t seed = 0;
};

/// Seeds for the next layer: clones of previous-layer primitives inside
/// the ROI with log_scale reduced by ln s, or uniform ROI seeds when none
/// qualify. psi_ref is stamped from `zoom_cameras`.
std::vector<GaussianPrimitive> seed_new_layer(const Scene &scene,
                                              std::span<const Camera> zoom_cameras,
                                              const Roi &roi, const SeedOptions &options,
                                              bool *used_fallback = nullptr);

/// Remove active-layer primitives whose opacity is below the threshold.
/// `count` primitives uniform in the ROI ball, isotropic scale radius / cbrt(count),
/// opacity 0.1, gray color, unassigned.
std::vector<GaussianPrimitive> uniform_seeds(const Roi &roi, std::size_t count, std::uint64_t seed,
                                             int sh_degree);

std::size_t prune(Scene &scene, double opacity_threshold = 0.005);

} // namespace zoomsplat
