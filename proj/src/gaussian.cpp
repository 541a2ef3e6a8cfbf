// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "zoomsplat/gaussian.hpp"

#include "sh_basis.hpp"
#include "zoomsplat/error.hpp"

#include <cmath>

namespace zoomsplat {

namespace detail {

void sh_basis_with_jacobian(const Vec3 &d, int degree, std::array<double, 16> &b,
                            std::array<Vec3, 16> *jac) {
    b.fill(0.0);
    if (jac) {
        jac->fill(Vec3::Zero());
    }
    const double x = d.x(), y = d.y(), z = d.z();
    b[0] = kShC0;
    if (degree < 1) {
        return;
    }
    b[1] = -kC1 * y;
    b[2] = kC1 * z;
    b[3] = -kC1 * x;
    if (jac) {
        (*jac)[1] = Vec3(0, -kC1, 0);
        (*jac)[2] = Vec3(0, 0, kC1);
        (*jac)[3] = Vec3(-kC1, 0, 0);
    }
    if (degree < 2) {
        return;
    }
    const double xx = x * x, yy = y * y, zz = z * z;
    b[4] = kC2[0] * x * y;
    b[5] = kC2[1] * y * z;
    b[6] = kC2[2] * (2.0 * zz - xx - yy);
    b[7] = kC2[3] * x * z;
    b[8] = kC2[4] * (xx - yy);
    if (jac) {
        (*jac)[4] = kC2[0] * Vec3(y, x, 0);
        (*jac)[5] = kC2[1] * Vec3(0, z, y);
        (*jac)[6] = kC2[2] * Vec3(-2 * x, -2 * y, 4 * z);
        (*jac)[7] = kC2[3] * Vec3(z, 0, x);
        (*jac)[8] = kC2[4] * Vec3(2 * x, -2 * y, 0);
    }
    if (degree < 3) {
        return;
    }
    b[9] = kC3[0] * y * (3.0 * xx - yy);
    b[10] = kC3[1] * x * y * z;
    b[11] = kC3[2] * y * (4.0 * zz - xx - yy);
    b[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    b[13] = kC3[4] * x * (4.0 * zz - xx - yy);
    b[14] = kC3[5] * z * (xx - yy);
    b[15] = kC3[6] * x * (xx - 3.0 * yy);
    if (jac) {
        (*jac)[9] = kC3[0] * Vec3(6 * x * y, 3 * xx - 3 * yy, 0);
        (*jac)[10] = kC3[1] * Vec3(y * z, x * z, x * y);
        (*jac)[11] = kC3[2] * Vec3(-2 * x * y, 4 * zz - xx - 3 * yy, 8 * y * z);
        (*jac)[12] = kC3[3] * Vec3(-6 * x * z, -6 * y * z, 6 * zz - 3 * xx - 3 * yy);
        (*jac)[13] = kC3[4] * Vec3(4 * zz - 3 * xx - yy, -2 * x * y, 8 * x * z);
        (*jac)[14] = kC3[5] * Vec3(2 * x * z, -2 * y * z, xx - yy);
        (*jac)[15] = kC3[6] * Vec3(3 * xx - 3 * yy, -6 * x * y, 0);
    }
}

} // namespace detail

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double logit(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw InvalidParameter("logit requires p in (0,1)");
    }
    return std::log(p / (1.0 - p));
}

double GaussianPrimitive::opacity() const { return sigmoid(opacity_logit); }

Mat3 quaternion_to_matrix(const Vec4 &q_in) {
    const double n = q_in.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
        throw InvalidParameter("quaternion must be finite with non-zero norm");
    }
    const Vec4 q = q_in / n;
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

Mat3 covariance_from_params(const Vec3 &log_scale, const Vec4 &rotation) {
    if (!log_scale.allFinite() || !rotation.allFinite()) {
        throw InvalidParameter("covariance parameters must be finite");
    }
    const Mat3 r = quaternion_to_matrix(rotation);
    const Vec3 s = log_scale.array().exp().matrix();
    const Mat3 m = r * s.asDiagonal();
    Mat3 cov = m * m.transpose();
    // Symmetrize to remove round-off in the off-diagonals.
    cov = 0.5 * (cov + cov.transpose()).eval();
    return cov;
}

std::optional<ProjectedGaussian> project_gaussian(const GaussianPrimitive &p, const Camera &cam) {
    const Vec3 t = cam.to_camera(p.center);
    if (!(t.z() > cam.near)) {
        return std::nullopt;
    }
    const Mat3 cov3 = covariance_from_params(p.log_scale, p.rotation);
    Eigen::Matrix<double, 2, 3> j;
    j << cam.fx / t.z(), 0.0, -cam.fx * t.x() / (t.z() * t.z()),
        0.0, cam.fy / t.z(), -cam.fy * t.y() / (t.z() * t.z());
    const Eigen::Matrix<double, 2, 3> jw = j * cam.rotation_wc;
    Mat2 cov2 = jw * cov3 * jw.transpose();
    cov2 = 0.5 * (cov2 + cov2.transpose()).eval();
    cov2(0, 0) += kLowPassFloor;
    cov2(1, 1) += kLowPassFloor;

    ProjectedGaussian out;
    out.mean2d = Vec2(cam.fx * t.x() / t.z() + cam.cx, cam.fy * t.y() / t.z() + cam.cy);
    out.cov2d = cov2;
    out.depth = t.z();
    return out;
}

std::array<double, 16> sh_basis(const Vec3 &dir, int degree) {
    std::array<double, 16> b{};
    detail::sh_basis_with_jacobian(dir, degree, b, nullptr);
    return b;
}

Vec3 evaluate_sh(std::span<const Vec3> coeffs, const Vec3 &dir, int degree) {
    if (degree < 0 || degree > kMaxShDegree) {
        throw InvalidParameter("SH degree must be in [0, 3]");
    }
    if (coeffs.size() != static_cast<std::size_t>(sh_coeff_count(degree))) {
        throw InvalidParameter("SH coefficient count does not match degree");
    }
    const auto b = sh_basis(dir, degree);
    Vec3 rgb = Vec3::Zero();
    for (std::size_t k = 0; k < coeffs.size(); ++k) {
        rgb += b[k] * coeffs[k];
    }
    rgb.array() += kShColorOffset;
    return rgb.cwiseMax(0.0);
}

} // namespace zoomsplat
