// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <Eigen/Core>

namespace zoomsplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
/// Quaternion stored as (w, x, y, z).
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

} // namespace zoomsplat
