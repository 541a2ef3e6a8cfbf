// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "zoomsplat/optimizer.hpp"
#include "zoomsplat/pipeline.hpp"

#include <random>
#include <string>
#include <vector>

namespace zstest {

using namespace zoomsplat;

Camera orbit_camera(double azimuth, double elevation, double radius, const Vec3 &target,
                    double focal, int width, int height);

/// `count` cameras on a ring around `target`, alternating slightly in elevation.
std::vector<Camera> convergent_rig(int count, double radius, double focal, int size,
                                   const Vec3 &target = Vec3::Zero());

GaussianPrimitive random_primitive(std::mt19937_64 &rng, int sh_degree, const Vec3 &center,
                                   double spread, double log_scale_lo, double log_scale_hi);

/// Single active layer built from random primitives, stamped against `cameras`.
Scene random_scene(std::mt19937_64 &rng, int count, int sh_degree, double spread,
                   std::span<const Camera> cameras, double log_scale_lo = -2.6,
                   double log_scale_hi = -1.6);

ImageBuffer random_image(std::mt19937_64 &rng, int width, int height, int channels);

ImageBuffer smooth_image(int width, int height, int channels, double phase = 0.0);

struct Fixture {
    Scene scene;
    std::vector<Camera> cameras;
    std::vector<ImageBuffer> images;
};

/// Random Gaussians kept inside the ROI ball of an 8-camera convergent rig.
Fixture synthetic_fixture(std::uint64_t seed, int primitive_count = 100, int camera_count = 8,
                          int size = 64);

/// Options under which the renderer is smooth in every parameter.
RenderOptions smooth_options();

struct GradientCheck {
    double max_rel_error = 0.0;
    std::size_t parameters = 0;
    std::string worst;
};

/// Central differences of the full training loss against the analytic gradient.
/// The geometry mask is frozen at the unperturbed render.
GradientCheck check_gradients(const Scene &scene, const TrainingView &view,
                              const LossWeights &weights, int zoom_factor,
                              const RenderOptions &options, double step = 1e-5,
                              double denominator_floor = 1e-8);

/// Scene with a frozen layer 0 and an active layer 1, every weight strictly inside
/// its band so the LoD gradient is exercised away from its kinks.
Scene random_gradient_scene(std::mt19937_64 &rng, int count, int sh_degree, const Camera &camera);

double mean_abs_diff(const ImageBuffer &a, const ImageBuffer &b);

} // namespace zstest
