// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "zoomsplat/optimizer.hpp"

#include "zoomsplat/error.hpp"
#include "zoomsplat/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace zoomsplat {

ViewLoss evaluate_view(const Scene &scene, const TrainingView &view, const LossWeights &weights,
                       int zoom_factor, const RenderOptions &options, const ImageBuffer *geo_mask) {
    const auto rendered = render(scene, view.camera, options);
    const ImageBuffer *lr = view.lr_input ? &*view.lr_input : nullptr;
    auto image_loss = dual_scale_loss(rendered.color, view.target, lr, weights, zoom_factor);
    auto combined = render_backward_combined(scene, view.camera, options, &image_loss.grad_hr,
                                             weights.lambda_geo, geo_mask);
    image_loss.geo = combined.geo_value;
    image_loss.total += weights.lambda_geo * combined.geo_value;
    return ViewLoss{std::move(image_loss), std::move(combined.gradients)};
}

namespace {

// Flat parameter block layout per primitive.
constexpr std::size_t kCenter = 0;
constexpr std::size_t kLogScale = 3;
constexpr std::size_t kRotation = 6;
constexpr std::size_t kOpacity = 10;
constexpr std::size_t kSh = 11;

} // namespace

OptimState::OptimState(std::span<const PrimitiveId> ids, int sh_degree)
    : ids_(ids.begin(), ids.end()),
      block_(kSh + 3 * static_cast<std::size_t>(sh_coeff_count(sh_degree))),
      m_(ids_.size() * block_, 0.0), v_(ids_.size() * block_, 0.0) {}

bool OptimState::moments_finite() const {
    return std::all_of(m_.begin(), m_.end(), [](double x) { return std::isfinite(x); }) &&
           std::all_of(v_.begin(), v_.end(), [](double x) { return std::isfinite(x); });
}

void OptimState::step(Scene &scene, const SceneGradients &grads, const LearningRates &rates,
                      double center_rate) {
    ++step_;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step_));
    std::vector<double> g(block_), lr(block_);
    for (std::size_t k = 0; k < block_; ++k) {
        lr[k] = k < kLogScale   ? center_rate
                : k < kRotation ? rates.log_scale
                : k < kOpacity  ? rates.rotation
                : k < kSh       ? rates.opacity_logit
                                : rates.sh;
    }
    for (std::size_t slot = 0; slot < ids_.size(); ++slot) {
        const PrimitiveId id = ids_[slot];
        auto &p = scene.primitives[id];
        for (int k = 0; k < 3; ++k) {
            g[kCenter + k] = grads.center[id][k];
            g[kLogScale + k] = grads.log_scale[id][k];
        }
        for (int k = 0; k < 4; ++k) {
            g[kRotation + k] = grads.rotation[id][k];
        }
        g[kOpacity] = grads.opacity_logit[id];
        for (std::size_t c = 0; c < p.sh_coeffs.size(); ++c) {
            for (int k = 0; k < 3; ++k) {
                g[kSh + 3 * c + k] = grads.sh[id][c][k];
            }
        }
        std::vector<double> delta(block_);
        for (std::size_t k = 0; k < block_; ++k) {
            double &m = m_[slot * block_ + k];
            double &v = v_[slot * block_ + k];
            m = kBeta1 * m + (1.0 - kBeta1) * g[k];
            v = kBeta2 * v + (1.0 - kBeta2) * g[k] * g[k];
            delta[k] = lr[k] * (m / bc1) / (std::sqrt(v / bc2) + kEpsilon);
        }
        for (int k = 0; k < 3; ++k) {
            p.center[k] -= delta[kCenter + k];
            p.log_scale[k] -= delta[kLogScale + k];
        }
        for (int k = 0; k < 4; ++k) {
            p.rotation[k] -= delta[kRotation + k];
        }
        const double qn = p.rotation.norm();
        p.rotation = qn > 0.0 ? Vec4(p.rotation / qn) : Vec4(1.0, 0.0, 0.0, 0.0);
        p.opacity_logit -= delta[kOpacity];
        for (std::size_t c = 0; c < p.sh_coeffs.size(); ++c) {
            for (int k = 0; k < 3; ++k) {
                p.sh_coeffs[c][k] -= delta[kSh + 3 * c + k];
            }
        }
    }
}

std::string TrainingReport::to_jsonl() const {
    std::ostringstream os;
    for (const auto &r : iterations) {
        os << fmt::format(R"({{"iteration": {}, "view": {}, "total": {:.9g}, "hr": {:.9g}, "lr": {:.9g}, "geo": {:.9g}, "psnr": {:.6f}}})",
                          r.iteration, r.view, r.total, r.hr, r.lr, r.geo, r.psnr)
           << '\n';
    }
    return os.str();
}

TrainingReport optimize_layer(Scene &scene, std::span<const TrainingView> views,
                              const LossWeights &weights, const Schedule &schedule) {
    TrainingReport report;
    if (schedule.iterations == 0) {
        return report;
    }
    const auto active = scene.active_layer();
    if (!active) {
        throw OwnershipError("optimize_layer needs exactly one active layer");
    }
    if (views.empty()) {
        throw InvalidParameter("optimize_layer needs at least one view");
    }
    weights.validate();
    OptimState state(scene.layers[*active].primitive_ids, scene.sh_degree);
    std::mt19937_64 rng(schedule.seed);
    const double base_center_rate = schedule.rates.center * schedule.scene_extent;
    const double iters = static_cast<double>(schedule.iterations);

    for (std::size_t it = 0; it < schedule.iterations; ++it) {
        const std::size_t vi = static_cast<std::size_t>(rng() % views.size());
        const auto &view = views[vi];
        const auto rendered = render(scene, view.camera, schedule.render);
        const ImageBuffer *lr = view.lr_input ? &*view.lr_input : nullptr;
        auto loss = dual_scale_loss(rendered.color, view.target, lr, weights, schedule.zoom_factor);
        auto combined = render_backward_combined(scene, view.camera, schedule.render, &loss.grad_hr,
                                                 weights.lambda_geo, nullptr);
        loss.geo = combined.geo_value;
        loss.total += weights.lambda_geo * combined.geo_value;
        if (!std::isfinite(loss.total) || !std::isfinite(combined.gradients.max_abs())) {
            throw NonFiniteLoss(fmt::format("non-finite loss at iteration {} (view {}): total={} hr={} "
                                            "lr={} geo={}",
                                            it, vi, loss.total, loss.hr, loss.lr, loss.geo),
                                it);
        }
        const double progress = iters > 1.0 ? static_cast<double>(it) / (iters - 1.0) : 0.0;
        const double center_rate =
            base_center_rate * std::pow(schedule.rates.center_final_fraction, progress);
        state.step(scene, combined.gradients, schedule.rates, center_rate);
        report.iterations.push_back(
            {it, vi, loss.total, loss.hr, loss.lr, loss.geo, psnr(rendered.color, view.target)});
    }

    double sum = 0.0;
    for (const auto &view : views) {
        const double p = psnr(render(scene, view.camera, schedule.render).color, view.target);
        report.view_psnr.push_back(p);
        sum += p;
    }
    report.final_psnr = sum / static_cast<double>(views.size());
    return report;
}

std::vector<GaussianPrimitive> seed_new_layer(const Scene &scene,
                                              std::span<const Camera> zoom_cameras,
                                              const Roi &roi, const SeedOptions &options,
                                              bool *used_fallback) {
    if (scene.layers.empty()) {
        throw OwnershipError("seeding requires an existing layer");
    }
    if (scene.active_layer()) {
        throw OwnershipError("the previous layer must be frozen before seeding");
    }
    if (zoom_cameras.empty()) {
        throw InvalidParameter("seeding requires zoom cameras");
    }
    const double ln_s = std::log(options.zoom_factor);
    const auto &prev = scene.layers.back();
    std::vector<GaussianPrimitive> seeds;
    for (PrimitiveId id : prev.primitive_ids) {
        const auto &parent = scene.primitives[id];
        if (!roi.contains(parent.center)) {
            continue;
        }
        bool large_enough = false;
        for (const auto &cam : zoom_cameras) {
            const auto proj = project_gaussian(parent, cam);
            if (!proj) {
                continue;
            }
            Mat2 cov = proj->cov2d;
            cov(0, 0) -= kLowPassFloor;
            cov(1, 1) -= kLowPassFloor;
            const double major = Eigen::SelfAdjointEigenSolver<Mat2>(cov).eigenvalues().maxCoeff();
            if (3.0 * std::sqrt(std::max(major, 0.0)) > options.min_footprint_px) {
                large_enough = true;
                break;
            }
        }
        if (!large_enough) {
            continue;
        }
        GaussianPrimitive clone = parent;
        clone.log_scale.array() -= ln_s;
        clone.psi_ref = mean_psi(zoom_cameras, clone.center);
        clone.lod_layer = kUnassignedLayer;
        seeds.push_back(std::move(clone));
    }
    if (used_fallback) {
        *used_fallback = seeds.empty();
    }
    if (!seeds.empty()) {
        return seeds;
    }

    spdlog::warn("no primitive qualified for seeding; placing {} uniform seeds in the ROI",
                 options.fallback_count);
    seeds = uniform_seeds(roi, options.fallback_count, options.seed, scene.sh_degree);
    for (auto &p : seeds) {
        p.psi_ref = mean_psi(zoom_cameras, p.center);
    }
    return seeds;
}

std::vector<GaussianPrimitive> uniform_seeds(const Roi &roi, std::size_t count, std::uint64_t seed,
                                             int sh_degree) {
    if (!(roi.radius > 0.0)) {
        throw InvalidParameter("uniform seeding needs a positive ROI radius");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const double sigma = roi.radius / std::cbrt(static_cast<double>(std::max<std::size_t>(count, 1)));
    const auto ncoef = static_cast<std::size_t>(sh_coeff_count(sh_degree));
    std::vector<GaussianPrimitive> seeds;
    seeds.reserve(count);
    while (seeds.size() < count) {
        const Vec3 offset(unit(rng), unit(rng), unit(rng));
        if (offset.squaredNorm() > 1.0) {
            continue;
        }
        GaussianPrimitive p;
        p.center = roi.center + roi.radius * offset;
        p.log_scale = Vec3::Constant(std::log(sigma));
        p.opacity_logit = logit(0.1);
        p.sh_coeffs.assign(ncoef, Vec3::Zero());
        p.lod_layer = kUnassignedLayer;
        seeds.push_back(std::move(p));
    }
    return seeds;
}

std::size_t prune(Scene &scene, double opacity_threshold) {
    const auto active = scene.active_layer();
    if (!active) {
        return 0;
    }
    const auto layer_index = static_cast<std::int32_t>(*active);
    std::vector<PrimitiveId> remap(scene.primitives.size());
    std::vector<GaussianPrimitive> kept;
    kept.reserve(scene.primitives.size());
    std::size_t removed = 0;
    for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
        const auto &p = scene.primitives[i];
        if (p.lod_layer == layer_index && p.opacity() < opacity_threshold) {
            remap[i] = static_cast<PrimitiveId>(-1);
            ++removed;
            continue;
        }
        remap[i] = static_cast<PrimitiveId>(kept.size());
        kept.push_back(p);
    }
    if (removed == 0) {
        return 0;
    }
    scene.primitives = std::move(kept);
    for (auto &layer : scene.layers) {
        std::vector<PrimitiveId> ids;
        ids.reserve(layer.primitive_ids.size());
        for (PrimitiveId id : layer.primitive_ids) {
            if (remap[id] != static_cast<PrimitiveId>(-1)) {
                ids.push_back(remap[id]);
            }
        }
        layer.primitive_ids = std::move(ids);
    }
    spdlog::info("pruned {} primitives below opacity {}", removed, opacity_threshold);
    return removed;
}

} // namespace zoomsplat
