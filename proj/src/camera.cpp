// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "zoomsplat/camera.hpp"

#include "zoomsplat/error.hpp"

#include <Eigen/Geometry>

#include <cmath>

namespace zoomsplat {

std::optional<Vec2> Camera::project(const Vec3 &cam) const {
    if (!(cam.z() > 0.0)) {
        return std::nullopt;
    }
    return Vec2(fx * cam.x() / cam.z() + cx, fy * cam.y() / cam.z() + cy);
}

Vec3 Camera::unproject(const Vec2 &pixel, double z) const {
    return Vec3((pixel.x() - cx) / fx * z, (pixel.y() - cy) / fy * z, z);
}

void Camera::validate(double orthonormal_tol) const {
    if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy)) {
        throw InvalidParameter("camera focal lengths must be positive and finite");
    }
    if (width <= 0 || height <= 0) {
        throw InvalidParameter("camera dimensions must be positive");
    }
    if (!std::isfinite(cx) || !std::isfinite(cy) || !translation_wc.allFinite() ||
        !rotation_wc.allFinite()) {
        throw InvalidParameter("camera parameters must be finite");
    }
    if (!(near > 0.0) || !(near < far) || !std::isfinite(far)) {
        throw InvalidParameter("camera clip range must satisfy 0 < near < far");
    }
    const double err = (rotation_wc * rotation_wc.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (err > orthonormal_tol) {
        throw InvalidParameter("camera rotation is not orthonormal");
    }
    if (rotation_wc.determinant() < 0.0) {
        throw InvalidParameter("camera rotation has determinant -1");
    }
}

Camera Camera::look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up, double focal,
                       int width, int height, double near, double far) {
    const Vec3 z = (target - eye).normalized();
    Vec3 x = z.cross(up);
    if (x.norm() < 1e-12) {
        x = z.unitOrthogonal();
    }
    x.normalize();
    // Image y grows downward, so the camera y axis is z cross x.
    const Vec3 y = z.cross(x);
    Camera cam;
    cam.fx = focal;
    cam.fy = focal;
    cam.width = width;
    cam.height = height;
    cam.cx = 0.5 * (width - 1);
    cam.cy = 0.5 * (height - 1);
    cam.rotation_wc.row(0) = x.transpose();
    cam.rotation_wc.row(1) = y.transpose();
    cam.rotation_wc.row(2) = z.transpose();
    cam.translation_wc = -cam.rotation_wc * eye;
    cam.near = near;
    cam.far = far;
    return cam;
}

} // namespace zoomsplat
