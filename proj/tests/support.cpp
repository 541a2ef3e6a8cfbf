// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "support.hpp"

#include "zoomsplat/lod.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numbers>

namespace zstest {

Camera orbit_camera(double azimuth, double elevation, double radius, const Vec3 &target,
                    double focal, int width, int height) {
    const Vec3 eye = target + radius * Vec3(std::cos(elevation) * std::sin(azimuth),
                                            std::sin(elevation),
                                            std::cos(elevation) * std::cos(azimuth));
    return Camera::look_at(eye, target, Vec3::UnitY(), focal, width, height);
}

std::vector<Camera> convergent_rig(int count, double radius, double focal, int size,
                                   const Vec3 &target) {
    std::vector<Camera> rig;
    for (int i = 0; i < count; ++i) {
        const double az = 2.0 * std::numbers::pi * i / count;
        const double el = (i % 2 ? 0.25 : 0.1);
        rig.push_back(orbit_camera(az, el, radius, target, focal, size, size));
    }
    return rig;
}

GaussianPrimitive random_primitive(std::mt19937_64 &rng, int sh_degree, const Vec3 &center,
                                   double spread, double log_scale_lo, double log_scale_hi) {
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> ls(log_scale_lo, log_scale_hi);
    std::uniform_real_distribution<double> op(-0.5, 2.0);
    std::uniform_real_distribution<double> dc(-1.2, 1.2);
    std::uniform_real_distribution<double> hi(-0.1, 0.1);
    std::normal_distribution<double> gauss;
    GaussianPrimitive p;
    Vec3 offset;
    do {
        offset = Vec3(unit(rng), unit(rng), unit(rng));
    } while (offset.squaredNorm() > 1.0);
    p.center = center + spread * offset;
    p.log_scale = Vec3(ls(rng), ls(rng), ls(rng));
    p.rotation = Vec4(gauss(rng), gauss(rng), gauss(rng), gauss(rng)).normalized();
    p.opacity_logit = op(rng);
    p.sh_coeffs.assign(sh_coeff_count(sh_degree), Vec3::Zero());
    p.sh_coeffs[0] = Vec3(dc(rng), dc(rng), dc(rng));
    for (std::size_t k = 1; k < p.sh_coeffs.size(); ++k) {
        p.sh_coeffs[k] = Vec3(hi(rng), hi(rng), hi(rng));
    }
    return p;
}

Scene random_scene(std::mt19937_64 &rng, int count, int sh_degree, double spread,
                   std::span<const Camera> cameras, double log_scale_lo, double log_scale_hi) {
    std::vector<GaussianPrimitive> prims;
    for (int i = 0; i < count; ++i) {
        prims.push_back(random_primitive(rng, sh_degree, Vec3::Zero(), spread, log_scale_lo, log_scale_hi));
    }
    return make_base_scene(std::move(prims), sh_degree, cameras);
}

ImageBuffer random_image(std::mt19937_64 &rng, int width, int height, int channels) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ImageBuffer img(width, height, channels);
    for (double &v : img.data()) {
        v = u(rng);
    }
    return img;
}

ImageBuffer smooth_image(int width, int height, int channels, double phase) {
    ImageBuffer img(width, height, channels);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < channels; ++c) {
                const double u = static_cast<double>(x) / width, v = static_cast<double>(y) / height;
                img.at(x, y, c) = 0.5 + 0.3 * std::sin(2.0 * std::numbers::pi * (u + 0.5 * v) + phase + c) *
                                            std::cos(std::numbers::pi * (v - 0.3 * u) + 0.7 * c);
            }
        }
    }
    return img;
}

Fixture synthetic_fixture(std::uint64_t seed, int primitive_count, int camera_count, int size) {
    std::mt19937_64 rng(seed);
    Fixture f;
    f.cameras = convergent_rig(camera_count, 4.0, 120.0 * size / 64.0, size);
    std::vector<GaussianPrimitive> prims;
    for (int i = 0; i < primitive_count; ++i) {
        prims.push_back(random_primitive(rng, 1, Vec3::Zero(), 0.28, std::log(0.02), std::log(0.06)));
    }
    f.scene = make_base_scene(std::move(prims), 1, f.cameras);
    for (const auto &cam : f.cameras) {
        f.images.push_back(render(f.scene, cam, RenderOptions{}).color);
    }
    return f;
}

RenderOptions smooth_options() {
    RenderOptions o;
    o.alpha_cutoff = 0.0;
    o.cull_sigma = 1e3;
    o.min_transmittance = 0.0;
    return o;
}

Scene random_gradient_scene(std::mt19937_64 &rng, int count, int sh_degree, const Camera &camera) {
    std::uniform_real_distribution<double> px(4.0, camera.width - 5.0);
    std::uniform_real_distribution<double> py(4.0, camera.height - 5.0);
    std::uniform_real_distribution<double> depth(3.0, 5.0);
    std::uniform_real_distribution<double> band(0.15, 0.75);
    std::bernoulli_distribution coin(0.5);
    const double s = RenderOptions{}.lod.zoom_factor_s;

    Scene scene;
    scene.sh_degree = sh_degree;
    scene.layers = {LodLayer{0, 0, true, {}}, LodLayer{1, 1, false, {}}};
    for (int i = 0; i < count; ++i) {
        const double z = depth(rng);
        const Vec3 cam_point((px(rng) - camera.cx) * z / camera.fx, (py(rng) - camera.cy) * z / camera.fy, z);
        auto p = random_primitive(rng, sh_degree, camera.to_world(cam_point), 0.0, -3.2, -2.2);
        const double psi = scale_projection_coefficient(camera, p.center);
        const std::int32_t layer = coin(rng) ? 1 : 0;
        const double exponent = (coin(rng) ? 1.0 : -1.0) * band(rng);
        p.psi_ref = psi * std::pow(s, exponent);
        p.lod_layer = layer;
        scene.layers[layer].primitive_ids.push_back(static_cast<PrimitiveId>(scene.primitives.size()));
        scene.primitives.push_back(std::move(p));
    }
    scene.validate();
    return scene;
}

GradientCheck check_gradients(const Scene &scene, const TrainingView &view,
                              const LossWeights &weights, int zoom_factor,
                              const RenderOptions &options, double step,
                              double denominator_floor) {
    const ImageBuffer mask = geo_mask_from_alpha(render(scene, view.camera, options).alpha);
    const auto loss_at = [&](const Scene &s) {
        return evaluate_view(s, view, weights, zoom_factor, options, &mask).loss.total;
    };
    const auto analytic = evaluate_view(scene, view, weights, zoom_factor, options, &mask).gradients;

    GradientCheck out;
    Scene work = scene;
    const auto probe = [&](double &param, double grad, const std::string &name) {
        const double saved = param;
        // Fourth-order central stencil keeps roundoff small for tiny gradients.
        const auto at = [&](double offset) {
            param = saved + offset;
            return loss_at(work);
        };
        const double d1 = at(step) - at(-step);
        const double d2 = at(2.0 * step) - at(-2.0 * step);
        param = saved;
        const double fd = (8.0 * d1 - d2) / (12.0 * step);
        const double rel = std::abs(grad - fd) / std::max({std::abs(grad), std::abs(fd), denominator_floor});
        ++out.parameters;
        if (rel > out.max_rel_error) {
            out.max_rel_error = rel;
            out.worst = fmt::format("{} analytic={:.9g} numeric={:.9g}", name, grad, fd);
        }
    };
    for (std::size_t i = 0; i < work.primitives.size(); ++i) {
        auto &p = work.primitives[i];
        for (int k = 0; k < 3; ++k) {
            probe(p.center[k], analytic.center[i][k], fmt::format("p{}.center[{}]", i, k));
            probe(p.log_scale[k], analytic.log_scale[i][k], fmt::format("p{}.log_scale[{}]", i, k));
        }
        for (int k = 0; k < 4; ++k) {
            probe(p.rotation[k], analytic.rotation[i][k], fmt::format("p{}.rotation[{}]", i, k));
        }
        probe(p.opacity_logit, analytic.opacity_logit[i], fmt::format("p{}.opacity", i));
        for (std::size_t c = 0; c < p.sh_coeffs.size(); ++c) {
            for (int k = 0; k < 3; ++k) {
                probe(p.sh_coeffs[c][k], analytic.sh[i][c][k], fmt::format("p{}.sh[{}][{}]", i, c, k));
            }
        }
    }
    return out;
}

double mean_abs_diff(const ImageBuffer &a, const ImageBuffer &b) {
    double sum = 0.0;
    const auto da = a.data(), db = b.data();
    for (std::size_t i = 0; i < da.size(); ++i) {
        sum += std::abs(da[i] - db[i]);
    }
    return sum / static_cast<double>(da.size());
}

} // namespace zstest
