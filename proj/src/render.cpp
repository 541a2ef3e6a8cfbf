// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "zoomsplat/render.hpp"

#include "parallel.hpp"
#include "sh_basis.hpp"
#include "zoomsplat/error.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace zoomsplat {

void RenderOptions::validate() const {
    if (tile_size < 1) {
        throw InvalidParameter("tile_size must be >= 1");
    }
    if (!(alpha_cutoff >= 0.0 && alpha_cutoff < 1.0)) {
        throw InvalidParameter("alpha_cutoff must lie in [0, 1)");
    }
    if (!(cull_sigma > 0.0)) {
        throw InvalidParameter("cull_sigma must be positive");
    }
    if (!(min_transmittance >= 0.0 && min_transmittance < 1.0)) {
        throw InvalidParameter("min_transmittance must lie in [0, 1)");
    }
    if (!background_color.allFinite()) {
        throw InvalidParameter("background color must be finite");
    }
    if (lod_enabled) {
        lod.validate();
    }
}

namespace {

using Mat23 = Eigen::Matrix<double, 2, 3>;

/// Everything the backward pass needs about one splat's preprocessing.
struct SplatCache {
    Vec3 t;              // camera-space center
    Mat23 jacobian;      // projective Jacobian at t
    Mat3 cov_cam;        // W Sigma W^T
    Mat3 rot;            // R of the normalized quaternion
    Vec3 scale;          // exp(log_scale)
    Vec4 q_unit;
    double q_norm = 1.0;
    Vec3 view_dir;       // unit, camera -> center
    double view_dist = 1.0;
    std::array<double, 16> basis{};
    std::array<Vec3, 16> basis_jac{};
    Vec3 raw_color;      // before clamping
    double sig = 0.0;    // sigmoid(opacity_logit)
    double weight = 1.0; // LoD weight
    Vec3 dweight_dcenter = Vec3::Zero();
};

/// Gradient with respect to one splat's screen-space quantities.
struct SplatGrad {
    Vec2 mean = Vec2::Zero();
    Mat2 conic = Mat2::Zero(); // symmetric full-matrix gradient
    double opacity = 0.0;
    Vec3 color = Vec3::Zero();
    double depth = 0.0;

    SplatGrad &operator+=(const SplatGrad &o) {
        mean += o.mean;
        conic += o.conic;
        opacity += o.opacity;
        color += o.color;
        depth += o.depth;
        return *this;
    }
};

void lod_weight_and_gradient(const GaussianPrimitive &p, const Camera &cam,
                             const RenderOptions &opt, double &weight, Vec3 &dweight) {
    weight = 1.0;
    dweight.setZero();
    if (!opt.lod_enabled) {
        return;
    }
    const Vec3 offset = p.center - cam.position();
    const double dist = offset.norm();
    const double psi = scale_projection_coefficient(cam, p.center);
    weight = layer_weight(psi, p.psi_ref, p.lod_layer, opt.lod);
    // Inside the linear band w = 1 - |ln psi - ln psi_ref| / ln s.
    const double log_ratio = std::log(psi) - std::log(p.psi_ref);
    const double ln_s = std::log(opt.lod.zoom_factor_s);
    const bool one_sided = p.lod_layer == 0 && psi >= p.psi_ref;
    const bool floored = p.lod_layer == 0 && weight <= opt.lod.weight_floor;
    if (one_sided || floored || !(weight > 0.0) || log_ratio == 0.0) {
        return;
    }
    const double dw_dpsi = -(log_ratio > 0.0 ? 1.0 : -1.0) / (psi * ln_s);
    dweight = dw_dpsi * offset / (dist * cam.fx);
}

bool prepare_splat(const GaussianPrimitive &p, PrimitiveId id, const Camera &cam,
                   const RenderOptions &opt, int sh_degree, Splat &out, SplatCache *cache) {
    if (p.lod_layer < 0) {
        return false;
    }
    const Vec3 t = cam.to_camera(p.center);
    if (!(t.z() > cam.near)) {
        return false;
    }
    double weight = 1.0;
    Vec3 dweight = Vec3::Zero();
    lod_weight_and_gradient(p, cam, opt, weight, dweight);
    const double sig = sigmoid(p.opacity_logit);
    const double opacity = sig * weight;
    if (!(opacity > 0.0)) {
        return false;
    }

    const double q_norm = p.rotation.norm();
    const Mat3 rot = quaternion_to_matrix(p.rotation);
    const Vec3 scale = p.log_scale.array().exp().matrix();
    const Mat3 a = rot * scale.asDiagonal();
    const Mat3 cov_world = a * a.transpose();
    const Mat3 cov_cam = cam.rotation_wc * cov_world * cam.rotation_wc.transpose();
    const double iz = 1.0 / t.z();
    Mat23 j;
    j << cam.fx * iz, 0.0, -cam.fx * t.x() * iz * iz, 0.0, cam.fy * iz, -cam.fy * t.y() * iz * iz;
    Mat2 cov2 = j * cov_cam * j.transpose();
    cov2(0, 1) = cov2(1, 0) = 0.5 * (cov2(0, 1) + cov2(1, 0));
    cov2(0, 0) += kLowPassFloor;
    cov2(1, 1) += kLowPassFloor;
    const double det = cov2.determinant();
    if (!(det > 0.0) || !std::isfinite(det)) {
        throw InvariantViolation("projected covariance is singular after flooring");
    }
    Mat2 conic;
    conic << cov2(1, 1) / det, -cov2(0, 1) / det, -cov2(1, 0) / det, cov2(0, 0) / det;

    const Vec3 view = p.center - cam.position();
    const double view_dist = view.norm();
    const Vec3 dir = view / view_dist;
    std::array<double, 16> basis{};
    std::array<Vec3, 16> basis_jac{};
    detail::sh_basis_with_jacobian(dir, sh_degree, basis, cache ? &basis_jac : nullptr);
    Vec3 raw = Vec3::Constant(kShColorOffset);
    const std::size_t ncoef = static_cast<std::size_t>(sh_coeff_count(sh_degree));
    for (std::size_t k = 0; k < ncoef; ++k) {
        raw += basis[k] * p.sh_coeffs[k];
    }

    out.id = id;
    out.mean = Vec2(cam.fx * t.x() * iz + cam.cx, cam.fy * t.y() * iz + cam.cy);
    out.conic = conic;
    out.opacity = opacity;
    out.color = raw.cwiseMax(0.0);
    out.depth = t.z();
    out.extent = Vec2(opt.cull_sigma * std::sqrt(cov2(0, 0)), opt.cull_sigma * std::sqrt(cov2(1, 1)));

    if (cache) {
        cache->t = t;
        cache->jacobian = j;
        cache->cov_cam = cov_cam;
        cache->rot = rot;
        cache->scale = scale;
        cache->q_unit = p.rotation / q_norm;
        cache->q_norm = q_norm;
        cache->view_dir = dir;
        cache->view_dist = view_dist;
        cache->basis = basis;
        cache->basis_jac = basis_jac;
        cache->raw_color = raw;
        cache->sig = sig;
        cache->weight = weight;
        cache->dweight_dcenter = dweight;
    }
    return true;
}

void check_scene(const Scene &scene) {
    if (scene.sh_degree < 0 || scene.sh_degree > kMaxShDegree) {
        throw InvalidParameter("scene SH degree must be in [0, 3]");
    }
    const auto need = static_cast<std::size_t>(sh_coeff_count(scene.sh_degree));
    for (const auto &p : scene.primitives) {
        if (p.sh_coeffs.size() != need) {
            throw InvalidParameter("primitive SH coefficient count does not match scene degree");
        }
    }
}

std::vector<Splat> project_with_cache(const Scene &scene, const Camera &camera,
                                      const RenderOptions &options, std::vector<SplatCache> *caches) {
    camera.validate(1e-6);
    options.validate();
    check_scene(scene);
    std::vector<Splat> splats;
    splats.reserve(scene.primitives.size());
    if (caches) {
        caches->clear();
        caches->reserve(scene.primitives.size());
    }
    for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
        Splat s;
        SplatCache c;
        if (prepare_splat(scene.primitives[i], static_cast<PrimitiveId>(i), camera, options,
                          scene.sh_degree, s, caches ? &c : nullptr)) {
            splats.push_back(s);
            if (caches) {
                caches->push_back(std::move(c));
            }
        }
    }
    return splats;
}

/// Front-to-back order over all splats: depth, then primitive id.
std::vector<std::uint32_t> global_order(std::span<const Splat> splats) {
    std::vector<std::uint32_t> order(splats.size());
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (splats[a].depth != splats[b].depth) {
            return splats[a].depth < splats[b].depth;
        }
        return splats[a].id < splats[b].id;
    });
    return order;
}

struct Contribution {
    std::uint32_t slot; // position in the traversal list
    double alpha;
    double gauss;
    double transmittance; // T before this contribution
    Vec2 offset;          // pixel - mean
};

struct PixelResult {
    Vec3 color;
    double alpha;
    double depth;
};

template <bool Record>
PixelResult shade_pixel(double px, double py, std::span<const Splat> splats,
                        std::span<const std::uint32_t> order, const RenderOptions &opt,
                        double cull2, std::vector<Contribution> *record) {
    double trans = 1.0;
    Vec3 color = Vec3::Zero();
    double depth_acc = 0.0;
    double weight_acc = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        const Splat &s = splats[order[k]];
        const double dx = px - s.mean.x();
        const double dy = py - s.mean.y();
        const double q = s.conic(0, 0) * dx * dx + 2.0 * s.conic(0, 1) * dx * dy +
                         s.conic(1, 1) * dy * dy;
        if (q > cull2) {
            continue;
        }
        const double gauss = std::exp(-0.5 * q);
        const double alpha = s.opacity * gauss;
        if (alpha < opt.alpha_cutoff) {
            continue;
        }
        const double w = trans * alpha;
        color += w * s.color;
        depth_acc += w * s.depth;
        weight_acc += w;
        if constexpr (Record) {
            record->push_back({static_cast<std::uint32_t>(k), alpha, gauss, trans, Vec2(dx, dy)});
        }
        trans *= (1.0 - alpha);
        if (trans < opt.min_transmittance) {
            break;
        }
    }
    PixelResult r;
    r.color = color + trans * opt.background_color;
    r.alpha = 1.0 - trans;
    r.depth = (r.alpha >= opt.depth_alpha_floor && weight_acc > 0.0) ? depth_acc / weight_acc : 0.0;
    return r;
}

RenderOutput make_output(const Camera &cam) {
    return RenderOutput{ImageBuffer(cam.width, cam.height, 3), DepthMap(cam.width, cam.height),
                        ImageBuffer(cam.width, cam.height, 1)};
}

void store(RenderOutput &out, int x, int y, const PixelResult &r) {
    for (int c = 0; c < 3; ++c) {
        out.color.at(x, y, c) = r.color[c];
    }
    out.alpha.at(x, y) = r.alpha;
    out.depth.at(x, y) = r.depth;
}

double cull_radius2(const RenderOptions &opt) {
    return std::isinf(opt.cull_sigma) ? std::numeric_limits<double>::infinity()
                                      : opt.cull_sigma * opt.cull_sigma;
}

struct TileRect {
    int x0, y0, x1, y1; // inclusive pixel bounds
};

TileRect tile_rect(const TileBins &bins, std::size_t tile, const Camera &cam) {
    const int tx = static_cast<int>(tile % static_cast<std::size_t>(bins.tiles_x));
    const int ty = static_cast<int>(tile / static_cast<std::size_t>(bins.tiles_x));
    TileRect r;
    r.x0 = tx * bins.tile_size;
    r.y0 = ty * bins.tile_size;
    r.x1 = std::min(r.x0 + bins.tile_size, cam.width) - 1;
    r.y1 = std::min(r.y0 + bins.tile_size, cam.height) - 1;
    return r;
}

void forward_tiles(std::span<const Splat> splats, const TileBins &bins, const Camera &cam,
                   const RenderOptions &opt, RenderOutput &out) {
    const double cull2 = cull_radius2(opt);
    detail::parallel_for(bins.tiles.size(), detail::resolve_workers(opt.workers), [&](std::size_t t) {
        const TileRect r = tile_rect(bins, t, cam);
        const auto &list = bins.tiles[t];
        for (int y = r.y0; y <= r.y1; ++y) {
            for (int x = r.x0; x <= r.x1; ++x) {
                store(out, x, y, shade_pixel<false>(x, y, splats, list, opt, cull2, nullptr));
            }
        }
    });
}

/// Accumulate pixel gradients into per-slot splat gradients; returns the
/// pixel's unweighted geometry term.
double backward_pixel(std::span<const Splat> splats, std::span<const std::uint32_t> list,
                      const std::vector<Contribution> &rec, const Vec3 &grad_color, double grad_geo,
                      const Vec3 &background, std::vector<SplatGrad> &slots) {
    const std::size_t n = rec.size();
    if (n == 0) {
        return 0.0;
    }
    // Depth-distortion terms: S_i = sum_j w_j |d_i - d_j|, relying on the
    // front-to-back (non-decreasing depth) order of the list.
    thread_local std::vector<double> dgeo_dw, dgeo_dd;
    dgeo_dw.assign(n, 0.0);
    dgeo_dd.assign(n, 0.0);
    double geo = 0.0;
    if (grad_geo != 0.0 || n > 1) {
        double w_total = 0.0, wd_total = 0.0;
        for (const auto &c : rec) {
            const double w = c.transmittance * c.alpha;
            w_total += w;
            wd_total += w * splats[list[c.slot]].depth;
        }
        double w_prefix = 0.0, wd_prefix = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = rec[i].transmittance * rec[i].alpha;
            const double d = splats[list[rec[i].slot]].depth;
            const double w_suffix = w_total - w_prefix - w;
            const double wd_suffix = wd_total - wd_prefix - w * d;
            const double s_i = d * w_prefix - wd_prefix + wd_suffix - d * w_suffix;
            geo += w * s_i;
            dgeo_dw[i] = 2.0 * s_i;
            dgeo_dd[i] = 2.0 * w * (w_prefix - w_suffix);
            w_prefix += w;
            wd_prefix += w * d;
        }
    }
    if (grad_color.isZero(0.0) && grad_geo == 0.0) {
        return geo;
    }
    Vec3 behind = background;
    double geo_behind = 0.0;
    for (std::size_t ii = n; ii-- > 0;) {
        const Contribution &c = rec[ii];
        const Splat &s = splats[list[c.slot]];
        SplatGrad &g = slots[c.slot];
        const double w = c.transmittance * c.alpha;
        double g_alpha = c.transmittance * grad_color.dot(s.color - behind);
        if (grad_geo != 0.0) {
            g_alpha += grad_geo * c.transmittance * (dgeo_dw[ii] - geo_behind);
            g.depth += grad_geo * dgeo_dd[ii];
        }
        g.color += w * grad_color;
        behind = c.alpha * s.color + (1.0 - c.alpha) * behind;
        geo_behind = c.alpha * dgeo_dw[ii] + (1.0 - c.alpha) * geo_behind;

        g.opacity += g_alpha * c.gauss;
        const double g_power = g_alpha * c.alpha;
        g.mean += g_power * (s.conic * c.offset);
        g.conic += (-0.5 * g_power) * (c.offset * c.offset.transpose());
    }
    return geo;
}

/// Chain screen-space gradients of one splat back to its primitive.
void chain_to_params(const GaussianPrimitive &p, const Camera &cam, const SplatCache &c,
                     const Splat &s, const SplatGrad &g, int sh_degree, SceneGradients &out) {
    const PrimitiveId id = s.id;
    Vec3 g_center = Vec3::Zero();
    Vec3 g_t = Vec3::Zero();

    // Opacity: o_eff = sigmoid(l) * w(center).
    out.opacity_logit[id] += g.opacity * c.weight * c.sig * (1.0 - c.sig);
    g_center += g.opacity * c.sig * c.dweight_dcenter;

    // Color through the clamped SH expansion.
    Vec3 g_col = g.color;
    for (int ch = 0; ch < 3; ++ch) {
        if (!(c.raw_color[ch] > 0.0)) {
            g_col[ch] = 0.0;
        }
    }
    const auto ncoef = static_cast<std::size_t>(sh_coeff_count(sh_degree));
    Vec3 g_dir = Vec3::Zero();
    for (std::size_t k = 0; k < ncoef; ++k) {
        out.sh[id][k] += c.basis[k] * g_col;
        g_dir += c.basis_jac[k] * p.sh_coeffs[k].dot(g_col);
    }
    g_center += (g_dir - c.view_dir * c.view_dir.dot(g_dir)) / c.view_dist;

    // Depth and mean projection.
    const double tx = c.t.x(), ty = c.t.y(), tz = c.t.z();
    const double iz = 1.0 / tz, iz2 = iz * iz, iz3 = iz2 * iz;
    g_t.z() += g.depth;
    g_t.x() += g.mean.x() * cam.fx * iz;
    g_t.y() += g.mean.y() * cam.fy * iz;
    g_t.z() += -g.mean.x() * cam.fx * tx * iz2 - g.mean.y() * cam.fy * ty * iz2;

    // Conic -> 2D covariance -> Jacobian and 3D covariance.
    const Mat2 &conic = s.conic;
    const Mat2 g_cov2 = -conic * g.conic * conic;
    const Mat3 g_cov_cam = c.jacobian.transpose() * g_cov2 * c.jacobian;
    const Mat23 g_j = 2.0 * g_cov2 * c.jacobian * c.cov_cam;
    g_t.x() += g_j(0, 2) * (-cam.fx * iz2);
    g_t.y() += g_j(1, 2) * (-cam.fy * iz2);
    g_t.z() += g_j(0, 0) * (-cam.fx * iz2) + g_j(0, 2) * (2.0 * cam.fx * tx * iz3) +
               g_j(1, 1) * (-cam.fy * iz2) + g_j(1, 2) * (2.0 * cam.fy * ty * iz3);

    const Mat3 g_cov_world = cam.rotation_wc.transpose() * g_cov_cam * cam.rotation_wc;
    const Mat3 a = c.rot * c.scale.asDiagonal();
    const Mat3 g_a = 2.0 * g_cov_world * a;
    const Mat3 rt_ga = c.rot.transpose() * g_a;
    for (int k = 0; k < 3; ++k) {
        out.log_scale[id][k] += rt_ga(k, k) * c.scale[k];
    }
    const Mat3 g_r = g_a * c.scale.asDiagonal();
    const double w = c.q_unit[0], x = c.q_unit[1], y = c.q_unit[2], z = c.q_unit[3];
    Vec4 g_qn;
    g_qn[0] = 2.0 * (-z * g_r(0, 1) + y * g_r(0, 2) + z * g_r(1, 0) - x * g_r(1, 2) -
                     y * g_r(2, 0) + x * g_r(2, 1));
    g_qn[1] = 2.0 * (y * g_r(0, 1) + z * g_r(0, 2) + y * g_r(1, 0) - 2.0 * x * g_r(1, 1) -
                     w * g_r(1, 2) + z * g_r(2, 0) + w * g_r(2, 1) - 2.0 * x * g_r(2, 2));
    g_qn[2] = 2.0 * (-2.0 * y * g_r(0, 0) + x * g_r(0, 1) + w * g_r(0, 2) + x * g_r(1, 0) +
                     z * g_r(1, 2) - w * g_r(2, 0) + z * g_r(2, 1) - 2.0 * y * g_r(2, 2));
    g_qn[3] = 2.0 * (-2.0 * z * g_r(0, 0) - w * g_r(0, 1) + x * g_r(0, 2) + w * g_r(1, 0) -
                     2.0 * z * g_r(1, 1) + y * g_r(1, 2) + x * g_r(2, 0) + y * g_r(2, 1));
    out.rotation[id] += (g_qn - c.q_unit * c.q_unit.dot(g_qn)) / c.q_norm;

    g_center += cam.rotation_wc.transpose() * g_t;
    out.center[id] += g_center;
}

} // namespace

std::vector<Splat> project_scene(const Scene &scene, const Camera &camera,
                                 const RenderOptions &options) {
    return project_with_cache(scene, camera, options, nullptr);
}

TileBins sort_and_bin(std::span<const Splat> splats, const Camera &camera,
                      const RenderOptions &options) {
    TileBins bins;
    bins.tile_size = options.tile_size;
    bins.tiles_x = (camera.width + options.tile_size - 1) / options.tile_size;
    bins.tiles_y = (camera.height + options.tile_size - 1) / options.tile_size;
    bins.tiles.assign(static_cast<std::size_t>(bins.tiles_x) * static_cast<std::size_t>(bins.tiles_y), {});
    const auto order = global_order(splats);
    const double ts = options.tile_size;
    for (std::uint32_t idx : order) {
        const Splat &s = splats[idx];
        // Pixel-center range covered by the ellipse's bounding box.
        const double lo_x = std::ceil(s.mean.x() - s.extent.x());
        const double hi_x = std::floor(s.mean.x() + s.extent.x());
        const double lo_y = std::ceil(s.mean.y() - s.extent.y());
        const double hi_y = std::floor(s.mean.y() + s.extent.y());
        if (hi_x < 0.0 || hi_y < 0.0 || lo_x > camera.width - 1 || lo_y > camera.height - 1 ||
            lo_x > hi_x || lo_y > hi_y) {
            continue;
        }
        const int tx0 = static_cast<int>(std::max(0.0, lo_x) / ts);
        const int ty0 = static_cast<int>(std::max(0.0, lo_y) / ts);
        const int tx1 = static_cast<int>(std::min<double>(camera.width - 1, hi_x) / ts);
        const int ty1 = static_cast<int>(std::min<double>(camera.height - 1, hi_y) / ts);
        for (int ty = ty0; ty <= ty1; ++ty) {
            for (int tx = tx0; tx <= tx1; ++tx) {
                bins.tiles[static_cast<std::size_t>(ty) * static_cast<std::size_t>(bins.tiles_x) +
                           static_cast<std::size_t>(tx)]
                    .push_back(idx);
            }
        }
    }
    return bins;
}

RenderOutput render(const Scene &scene, const Camera &camera, const RenderOptions &options) {
    const auto splats = project_scene(scene, camera, options);
    const auto bins = sort_and_bin(splats, camera, options);
    RenderOutput out = make_output(camera);
    forward_tiles(splats, bins, camera, options, out);
    return out;
}

RenderOutput render_reference(const Scene &scene, const Camera &camera,
                              const RenderOptions &options) {
    const auto splats = project_scene(scene, camera, options);
    const auto order = global_order(splats);
    const double cull2 = cull_radius2(options);
    RenderOutput out = make_output(camera);
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            store(out, x, y, shade_pixel<false>(x, y, splats, order, options, cull2, nullptr));
        }
    }
    return out;
}

SceneGradients SceneGradients::zeros_like(const Scene &scene) {
    SceneGradients g;
    const std::size_t n = scene.primitives.size();
    g.center.assign(n, Vec3::Zero());
    g.log_scale.assign(n, Vec3::Zero());
    g.rotation.assign(n, Vec4::Zero());
    g.opacity_logit.assign(n, 0.0);
    g.sh.assign(n, std::vector<Vec3>(static_cast<std::size_t>(sh_coeff_count(scene.sh_degree)),
                                     Vec3::Zero()));
    return g;
}

SceneGradients &SceneGradients::operator+=(const SceneGradients &o) {
    if (o.center.size() != center.size()) {
        throw InvalidParameter("gradient sets have different primitive counts");
    }
    for (std::size_t i = 0; i < center.size(); ++i) {
        center[i] += o.center[i];
        log_scale[i] += o.log_scale[i];
        rotation[i] += o.rotation[i];
        opacity_logit[i] += o.opacity_logit[i];
        for (std::size_t k = 0; k < sh[i].size(); ++k) {
            sh[i][k] += o.sh[i][k];
        }
    }
    return *this;
}

double SceneGradients::max_abs() const {
    double m = 0.0;
    for (std::size_t i = 0; i < center.size(); ++i) {
        m = std::max({m, center[i].cwiseAbs().maxCoeff(), log_scale[i].cwiseAbs().maxCoeff(),
                      rotation[i].cwiseAbs().maxCoeff(), std::abs(opacity_logit[i])});
        for (const auto &c : sh[i]) {
            m = std::max(m, c.cwiseAbs().maxCoeff());
        }
    }
    return m;
}

ImageBuffer geo_mask_from_alpha(const ImageBuffer &alpha) {
    ImageBuffer mask(alpha.width(), alpha.height(), 1);
    for (int y = 0; y < alpha.height(); ++y) {
        for (int x = 0; x < alpha.width(); ++x) {
            mask.at(x, y) = alpha.at(x, y) > 0.5 ? 1.0 : 0.0;
        }
    }
    return mask;
}

RenderWithGradients render_backward_combined(const Scene &scene, const Camera &camera,
                                             const RenderOptions &options,
                                             const ImageBuffer *grad_color, double geo_weight,
                                             const ImageBuffer *geo_mask) {
    if (grad_color && (grad_color->width() != camera.width || grad_color->height() != camera.height ||
                       grad_color->channels() != 3)) {
        throw InvalidParameter("color gradient must be a 3-channel image at camera resolution");
    }
    if (geo_mask && (geo_mask->width() != camera.width || geo_mask->height() != camera.height)) {
        throw InvalidParameter("geometry mask must match camera resolution");
    }
    std::vector<SplatCache> caches;
    const auto splats = project_with_cache(scene, camera, options, &caches);
    const auto bins = sort_and_bin(splats, camera, options);

    RenderWithGradients result;
    result.output = make_output(camera);
    forward_tiles(splats, bins, camera, options, result.output);

    const ImageBuffer mask = geo_mask ? *geo_mask : geo_mask_from_alpha(result.output.alpha);
    std::size_t mask_count = 0;
    for (double v : mask.data()) {
        mask_count += v != 0.0 ? 1 : 0;
    }
    const double geo_pixel_grad = mask_count > 0 ? geo_weight / static_cast<double>(mask_count) : 0.0;

    const double cull2 = cull_radius2(options);
    std::vector<std::vector<SplatGrad>> tile_grads(bins.tiles.size());
    std::vector<double> tile_geo(bins.tiles.size(), 0.0);
    detail::parallel_for(bins.tiles.size(), detail::resolve_workers(options.workers), [&](std::size_t t) {
        const TileRect r = tile_rect(bins, t, camera);
        const auto &list = bins.tiles[t];
        auto &slots = tile_grads[t];
        slots.assign(list.size(), SplatGrad{});
        std::vector<Contribution> rec;
        double geo_sum = 0.0;
        for (int y = r.y0; y <= r.y1; ++y) {
            for (int x = r.x0; x <= r.x1; ++x) {
                rec.clear();
                shade_pixel<true>(x, y, splats, list, options, cull2, &rec);
                const bool in_mask = mask.at(x, y) != 0.0;
                Vec3 gc = Vec3::Zero();
                if (grad_color) {
                    gc = Vec3(grad_color->at(x, y, 0), grad_color->at(x, y, 1), grad_color->at(x, y, 2));
                }
                const double gg = in_mask ? geo_pixel_grad : 0.0;
                const double geo = backward_pixel(splats, list, rec, gc, gg, options.background_color, slots);
                if (in_mask) {
                    geo_sum += geo;
                }
            }
        }
        tile_geo[t] = geo_sum;
    });

    // Deterministic reduction in tile-index order.
    std::vector<SplatGrad> per_splat(splats.size());
    double geo_total = 0.0;
    for (std::size_t t = 0; t < bins.tiles.size(); ++t) {
        const auto &list = bins.tiles[t];
        for (std::size_t k = 0; k < list.size(); ++k) {
            per_splat[list[k]] += tile_grads[t][k];
        }
        geo_total += tile_geo[t];
    }

    result.gradients = SceneGradients::zeros_like(scene);
    for (std::size_t i = 0; i < splats.size(); ++i) {
        chain_to_params(scene.primitives[splats[i].id], camera, caches[i], splats[i], per_splat[i],
                        scene.sh_degree, result.gradients);
    }
    result.geo_pixels = mask_count;
    result.geo_value = mask_count > 0 ? geo_total / static_cast<double>(mask_count) : 0.0;
    return result;
}

SceneGradients render_backward(const Scene &scene, const Camera &camera,
                               const RenderOptions &options, const ImageBuffer &grad_color) {
    return render_backward_combined(scene, camera, options, &grad_color, 0.0, nullptr).gradients;
}

GeoRegularizer geo_regularizer(const Scene &scene, const Camera &camera,
                               const RenderOptions &options, const ImageBuffer *mask) {
    auto r = render_backward_combined(scene, camera, options, nullptr, 1.0, mask);
    return GeoRegularizer{r.geo_value, r.geo_pixels, std::move(r.gradients)};
}

} // namespace zoomsplat
