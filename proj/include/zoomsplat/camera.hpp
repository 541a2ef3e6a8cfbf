// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "zoomsplat/types.hpp"

#include <optional>

namespace zoomsplat {

/// Pinhole camera. Pixel (u, v) samples the continuous image coordinate
/// (u, v); the principal point uses the same convention.
///
/// rotation_wc / translation_wc map world points into camera space:
/// x_cam = rotation_wc * x_world + translation_wc, camera looks down +z.
struct Camera {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;
    Mat3 rotation_wc = Mat3::Identity();
    Vec3 translation_wc = Vec3::Zero();
    double near = 0.01;
    double far = 100.0;

    /// Camera center in world coordinates.
    Vec3 position() const { return -rotation_wc.transpose() * translation_wc; }
    /// Unit optical axis in world coordinates.
    Vec3 forward() const { return rotation_wc.row(2).transpose(); }

    Vec3 to_camera(const Vec3 &world) const { return rotation_wc * world + translation_wc; }
    Vec3 to_world(const Vec3 &cam) const { return rotation_wc.transpose() * (cam - translation_wc); }

    /// Pixel coordinates of a camera-space point; nullopt when z <= 0.
    std::optional<Vec2> project(const Vec3 &cam) const;
    /// Camera-space point at depth z along pixel (u, v).
    Vec3 unproject(const Vec2 &pixel, double z) const;

    /// Throws InvalidParameter when an invariant does not hold.
    void validate(double orthonormal_tol = 1e-9) const;

    /// Build a camera at `eye` looking at `target` with the given up hint.
    static Camera look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up, double focal,
                          int width, int height, double near = 0.01, double far = 100.0);

    friend bool operator==(const Camera &, const Camera &) = default;
};

} // namespace zoomsplat
