// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "zoomsplat/camera.hpp"
#include "zoomsplat/types.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace zoomsplat {

inline constexpr int kMaxShDegree = 3;
/// Screen-space dilation added to the projected covariance diagonal, px^2.
inline constexpr double kLowPassFloor = 0.3;
/// Offset added to the SH expansion before clamping at zero.
inline constexpr double kShColorOffset = 0.5;
inline constexpr double kShC0 = 0.28209479177387814;

constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

/// One anisotropic Gaussian. Scale is stored as log std-dev, opacity as a logit.
struct GaussianPrimitive {
    Vec3 center = Vec3::Zero();
    Vec3 log_scale = Vec3::Zero();
    Vec4 rotation = Vec4(1.0, 0.0, 0.0, 0.0); // w, x, y, z
    double opacity_logit = 0.0;
    std::vector<Vec3> sh_coeffs = std::vector<Vec3>(1, Vec3::Zero());
    std::int32_t lod_layer = 0;
    double psi_ref = 1.0;

    double opacity() const;
    Vec3 scale() const { return log_scale.array().exp().matrix(); }

    friend bool operator==(const GaussianPrimitive &, const GaussianPrimitive &) = default;
};

double sigmoid(double x);
double logit(double p);

/// Rotation matrix of a quaternion (w, x, y, z) after normalization.
Mat3 quaternion_to_matrix(const Vec4 &q);

/// R * S * S^T * R^T with S = diag(exp(log_scale)).
Mat3 covariance_from_params(const Vec3 &log_scale, const Vec4 &rotation);

struct ProjectedGaussian {
    Vec2 mean2d;
    Mat2 cov2d; // includes the low-pass floor
    double depth;
};

/// Perspective projection with the first-order (EWA) Jacobian. Returns
/// nullopt when the center is not beyond the near plane.
std::optional<ProjectedGaussian> project_gaussian(const GaussianPrimitive &primitive,
                                                  const Camera &camera);

/// Real SH basis values for a unit direction; entries past the degree are zero.
std::array<double, 16> sh_basis(const Vec3 &dir, int degree);

/// Evaluate view-dependent color: basis expansion + 0.5, clamped at zero.
Vec3 evaluate_sh(std::span<const Vec3> sh_coeffs, const Vec3 &view_direction, int degree);

} // namespace zoomsplat
