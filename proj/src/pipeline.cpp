// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "zoomsplat/pipeline.hpp"

#include "zoomsplat/error.hpp"
#include "zoomsplat/lod.hpp"
#include "zoomsplat/resample.hpp"

#include <Eigen/Eigenvalues>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <numeric>

namespace zoomsplat {

void PipelineConfig::validate() const {
    if (zoom_factor_s < 2) {
        throw InvalidParameter("zoom_factor_s must be at least 2");
    }
    if (num_zoom_steps < 0) {
        throw InvalidParameter("num_zoom_steps must be non-negative");
    }
    if (neighbor_count < 0) {
        throw InvalidParameter("neighbor_count must be non-negative");
    }
    if (!(occlusion_tol >= 0.0)) {
        throw InvalidParameter("occlusion_tol must be non-negative");
    }
    if (sh_degree < 0 || sh_degree > kMaxShDegree) {
        throw InvalidParameter("sh_degree must lie in [0, 3]");
    }
    weights.validate();
    render.validate();
}

// ---------------------------------------------------------------------------
// config file mapping

namespace {

template <typename T>
T parse_number(const std::string &key, const std::string &text) {
    T value{};
    const auto *end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        throw LoadError(fmt::format("config key '{}': cannot parse '{}'", key, text));
    }
    return value;
}

bool parse_bool(const std::string &key, const std::string &text) {
    if (text == "true" || text == "1") {
        return true;
    }
    if (text == "false" || text == "0") {
        return false;
    }
    throw LoadError(fmt::format("config key '{}': expected true or false, got '{}'", key, text));
}

struct Field {
    std::function<void(PipelineConfig &, const std::string &, const std::string &)> read;
    std::function<std::string(const PipelineConfig &)> write;
};

template <typename T>
Field number_field(T PipelineConfig::*member) {
    return {[member](PipelineConfig &c, const std::string &k, const std::string &v) {
                c.*member = parse_number<T>(k, v);
            },
            [member](const PipelineConfig &c) { return fmt::format("{}", c.*member); }};
}

template <typename Sub, typename T>
Field nested_field(Sub PipelineConfig::*outer, T Sub::*inner) {
    return {[outer, inner](PipelineConfig &c, const std::string &k, const std::string &v) {
                (c.*outer).*inner = parse_number<T>(k, v);
            },
            [outer, inner](const PipelineConfig &c) { return fmt::format("{}", (c.*outer).*inner); }};
}

const std::map<std::string, Field> &config_fields() {
    static const std::map<std::string, Field> fields{
        {"zoom_factor_s", number_field(&PipelineConfig::zoom_factor_s)},
        {"num_zoom_steps", number_field(&PipelineConfig::num_zoom_steps)},
        {"base_iterations", number_field(&PipelineConfig::base_iterations)},
        {"step_iterations", number_field(&PipelineConfig::step_iterations)},
        {"neighbor_count", number_field(&PipelineConfig::neighbor_count)},
        {"rng_seed", number_field(&PipelineConfig::rng_seed)},
        {"occlusion_tol", number_field(&PipelineConfig::occlusion_tol)},
        {"min_footprint_px", number_field(&PipelineConfig::min_footprint_px)},
        {"fallback_seed_count", number_field(&PipelineConfig::fallback_seed_count)},
        {"prune_threshold", number_field(&PipelineConfig::prune_threshold)},
        {"sh_degree", number_field(&PipelineConfig::sh_degree)},
        {"lambda_hr", nested_field(&PipelineConfig::weights, &LossWeights::lambda_hr)},
        {"lambda_lr", nested_field(&PipelineConfig::weights, &LossWeights::lambda_lr)},
        {"lambda_geo", nested_field(&PipelineConfig::weights, &LossWeights::lambda_geo)},
        {"lambda_dssim", nested_field(&PipelineConfig::weights, &LossWeights::lambda_dssim)},
        {"lr_center", nested_field(&PipelineConfig::rates, &LearningRates::center)},
        {"lr_log_scale", nested_field(&PipelineConfig::rates, &LearningRates::log_scale)},
        {"lr_rotation", nested_field(&PipelineConfig::rates, &LearningRates::rotation)},
        {"lr_opacity", nested_field(&PipelineConfig::rates, &LearningRates::opacity_logit)},
        {"lr_sh", nested_field(&PipelineConfig::rates, &LearningRates::sh)},
        {"lr_center_final_fraction",
         nested_field(&PipelineConfig::rates, &LearningRates::center_final_fraction)},
        {"render_tile_size", nested_field(&PipelineConfig::render, &RenderOptions::tile_size)},
        {"render_workers", nested_field(&PipelineConfig::render, &RenderOptions::workers)},
        {"render_alpha_cutoff", nested_field(&PipelineConfig::render, &RenderOptions::alpha_cutoff)},
        {"sr_provider",
         {[](PipelineConfig &c, const std::string &, const std::string &v) {
              try {
                  c.sr_provider = parse_provider_kind(v);
              } catch (const InvalidParameter &e) {
                  throw LoadError(e.what());
              }
          },
          [](const PipelineConfig &c) { return std::string(to_string(c.sr_provider)); }}},
        {"sr_endpoint",
         {[](PipelineConfig &c, const std::string &, const std::string &v) { c.sr_endpoint = v; },
          [](const PipelineConfig &c) { return c.sr_endpoint; }}},
        {"static_prompt",
         {[](PipelineConfig &c, const std::string &, const std::string &v) { c.static_prompt = v; },
          [](const PipelineConfig &c) { return c.static_prompt; }}},
        {"lod_enabled",
         {[](PipelineConfig &c, const std::string &k, const std::string &v) {
              c.render.lod_enabled = parse_bool(k, v);
          },
          [](const PipelineConfig &c) { return std::string(c.render.lod_enabled ? "true" : "false"); }}},
    };
    return fields;
}

} // namespace

PipelineConfig pipeline_config_from_map(const ConfigMap &map) {
    PipelineConfig config;
    const auto &fields = config_fields();
    for (const auto &[key, value] : map) {
        const auto it = fields.find(key);
        if (it == fields.end()) {
            spdlog::warn("ignoring unknown config key '{}'", key);
            continue;
        }
        it->second.read(config, key, value);
    }
    config.render.lod.zoom_factor_s = config.zoom_factor_s;
    try {
        config.validate();
    } catch (const InvalidParameter &e) {
        throw LoadError(fmt::format("invalid configuration: {}", e.what()));
    }
    return config;
}

ConfigMap pipeline_config_to_map(const PipelineConfig &config) {
    ConfigMap map;
    for (const auto &[key, field] : config_fields()) {
        map[key] = field.write(config);
    }
    return map;
}

// ---------------------------------------------------------------------------
// state

void ZoomState::validate() const {
    scene.validate();
    if (scene.layers.size() != static_cast<std::size_t>(current_level) + 1) {
        throw InvariantViolation(fmt::format("level {} needs {} layers, scene has {}", current_level,
                                             current_level + 1, scene.layers.size()));
    }
    for (std::size_t k = 0; k + 1 < scene.layers.size(); ++k) {
        if (!scene.layers[k].frozen) {
            throw InvariantViolation(fmt::format("layer {} should be frozen", k));
        }
    }
}

// ---------------------------------------------------------------------------
// ROI and cameras

bool inside_frustum(const Camera &camera, const Vec3 &point) {
    const Vec3 pc = camera.to_camera(point);
    if (!(pc.z() >= camera.near && pc.z() <= camera.far)) {
        return false;
    }
    const Vec2 uv = *camera.project(pc);
    return uv.x() >= -0.5 && uv.x() <= camera.width - 0.5 && uv.y() >= -0.5 &&
           uv.y() <= camera.height - 0.5;
}

Roi compute_roi(std::span<const Camera> cameras) {
    if (cameras.size() < 2) {
        throw InvalidParameter("ROI needs at least two cameras");
    }
    Mat3 a = Mat3::Zero();
    Vec3 b = Vec3::Zero();
    Vec3 centroid = Vec3::Zero();
    Vec3 mean_dir = Vec3::Zero();
    double mean_mid = 0.0;
    for (const auto &cam : cameras) {
        const Vec3 o = cam.position();
        const Vec3 d = cam.forward();
        const Mat3 p = Mat3::Identity() - d * d.transpose();
        a += p;
        b += p * o;
        centroid += o;
        mean_dir += d;
        mean_mid += 0.5 * (cam.near + cam.far);
    }
    const double n = static_cast<double>(cameras.size());
    centroid /= n;
    mean_mid /= n;

    // Axes that are (nearly) parallel leave one direction unconstrained.
    const Eigen::SelfAdjointEigenSolver<Mat3> eig(a);
    Vec3 candidate;
    if (eig.eigenvalues().minCoeff() < 1e-9 * a.trace()) {
        candidate = centroid + mean_mid * (mean_dir.norm() > 1e-12 ? Vec3(mean_dir.normalized())
                                                                  : cameras.front().forward());
    } else {
        candidate = a.ldlt().solve(b);
    }

    const auto inside_all = [&](const Vec3 &p) {
        return std::all_of(cameras.begin(), cameras.end(),
                           [&](const Camera &c) { return inside_frustum(c, p); });
    };
    Vec3 center = candidate;
    if (!inside_all(candidate)) {
        if (!inside_all(centroid)) {
            throw RoiUndefined("no point between the axis intersection and the camera centroid "
                               "lies inside every frustum");
        }
        double lo = 0.0, hi = 1.0; // lo inside, hi outside, measured from the centroid
        for (int it = 0; it < 32; ++it) {
            const double mid = 0.5 * (lo + hi);
            (inside_all(centroid + mid * (candidate - centroid)) ? lo : hi) = mid;
        }
        center = centroid + lo * (candidate - centroid);
    }

    std::vector<double> dist;
    dist.reserve(cameras.size());
    for (const auto &cam : cameras) {
        dist.push_back((cam.position() - center).norm());
    }
    std::sort(dist.begin(), dist.end());
    const std::size_t m = dist.size() / 2;
    const double median = dist.size() % 2 ? dist[m] : 0.5 * (dist[m - 1] + dist[m]);
    return Roi{center, 0.1 * median};
}

std::vector<Camera> make_zoom_cameras(std::span<const Camera> base_cameras, const Roi &roi,
                                      int level, int s) {
    if (level < 0 || s < 2) {
        throw InvalidParameter("zoom cameras need level >= 0 and s >= 2");
    }
    const double mult = std::pow(static_cast<double>(s), level);
    std::vector<Camera> out;
    for (std::size_t i = 0; i < base_cameras.size(); ++i) {
        const Camera &base = base_cameras[i];
        if (!(base.to_camera(roi.center).z() > 0.0)) {
            spdlog::warn("dropping camera {}: the ROI is behind it", i);
            continue;
        }
        const Vec3 eye = base.position();
        const Vec3 up = -base.rotation_wc.row(1).transpose();
        const Camera aimed = Camera::look_at(eye, roi.center, up, base.fx, base.width, base.height,
                                             base.near, base.far);
        Camera cam = base;
        cam.rotation_wc = aimed.rotation_wc;
        cam.translation_wc = aimed.translation_wc;
        cam.fx = base.fx * mult;
        cam.fy = base.fy * mult;
        out.push_back(cam);
    }
    if (out.empty()) {
        throw RoiUndefined("the ROI is behind every camera");
    }
    return out;
}

double camera_extent(std::span<const Camera> cameras) {
    if (cameras.empty()) {
        throw InvalidParameter("camera extent needs cameras");
    }
    Vec3 centroid = Vec3::Zero();
    for (const auto &c : cameras) {
        centroid += c.position();
    }
    centroid /= static_cast<double>(cameras.size());
    double radius = 0.0;
    for (const auto &c : cameras) {
        radius = std::max(radius, (c.position() - centroid).norm());
    }
    return 1.1 * std::max(radius, 1e-6);
}

// ---------------------------------------------------------------------------
// initialisation

std::vector<GaussianPrimitive> primitives_from_points(std::span<const SparsePoint> points,
                                                      int sh_degree) {
    if (points.size() < 2) {
        throw InvalidParameter("point initialisation needs at least two points");
    }
    const auto ncoef = static_cast<std::size_t>(sh_coeff_count(sh_degree));
    const std::size_t k = std::min<std::size_t>(3, points.size() - 1);
    std::vector<GaussianPrimitive> out;
    out.reserve(points.size());
    std::vector<double> d2(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (std::size_t j = 0; j < points.size(); ++j) {
            d2[j] = j == i ? std::numeric_limits<double>::infinity()
                           : (points[i].position - points[j].position).squaredNorm();
        }
        std::partial_sort(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(k), d2.end());
        double mean = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            mean += std::sqrt(d2[j]);
        }
        mean = std::max(mean / static_cast<double>(k), 1e-7);

        GaussianPrimitive p;
        p.center = points[i].position;
        p.log_scale = Vec3::Constant(std::log(mean));
        p.opacity_logit = logit(0.1);
        p.sh_coeffs.assign(ncoef, Vec3::Zero());
        if (points[i].color) {
            p.sh_coeffs[0] = (*points[i].color - Vec3::Constant(kShColorOffset)) / kShC0;
        }
        p.lod_layer = kUnassignedLayer;
        out.push_back(std::move(p));
    }
    return out;
}

Scene make_base_scene(std::vector<GaussianPrimitive> primitives, int sh_degree,
                      std::span<const Camera> cameras) {
    Scene scene;
    scene.sh_degree = sh_degree;
    std::vector<PrimitiveId> ids;
    ids.reserve(primitives.size());
    for (auto &p : primitives) {
        p.lod_layer = kUnassignedLayer;
        ids.push_back(scene.stage(std::move(p)));
    }
    add_layer(scene, ids, cameras);
    return scene;
}

ZoomState make_zoom_state(Scene scene, std::vector<Camera> cameras, std::vector<ImageBuffer> images) {
    if (cameras.size() != images.size()) {
        throw InvalidParameter(fmt::format("{} cameras but {} images", cameras.size(), images.size()));
    }
    ZoomState state;
    state.roi = compute_roi(cameras);
    state.scene = std::move(scene);
    state.base_cameras = cameras;
    state.supervision.push_back({std::move(cameras), std::move(images)});
    state.validate();
    return state;
}

TrainingReport train_base(ZoomState &state, const PipelineConfig &config) {
    config.validate();
    if (state.current_level != 0) {
        throw InvalidParameter("base training only applies at level 0");
    }
    state.validate();
    const auto &sup = state.supervision.at(0);
    std::vector<TrainingView> views;
    for (std::size_t i = 0; i < sup.cameras.size(); ++i) {
        views.push_back({sup.images[i], std::nullopt, sup.cameras[i]});
    }
    Schedule schedule;
    schedule.iterations = config.base_iterations;
    schedule.seed = config.rng_seed;
    schedule.rates = config.rates;
    schedule.scene_extent = camera_extent(state.base_cameras);
    schedule.zoom_factor = config.zoom_factor_s;
    schedule.render = config.render;
    schedule.render.lod.zoom_factor_s = config.zoom_factor_s;
    Scene work = state.scene;
    auto report = optimize_layer(work, views, config.weights, schedule);
    if (config.prune_threshold > 0.0) {
        prune(work, config.prune_threshold);
    }
    state.scene = std::move(work);
    return report;
}

// ---------------------------------------------------------------------------
// zoom step

ImageBuffer crop(const ImageBuffer &image, double x0, double y0, int w, int h) {
    if (w <= 0 || h <= 0) {
        throw InvalidParameter("crop size must be positive");
    }
    ImageBuffer out(w, h, image.channels());
    const bool integral = x0 == std::floor(x0) && y0 == std::floor(y0) && x0 >= 0 && y0 >= 0 &&
                          x0 + w <= image.width() && y0 + h <= image.height();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < image.channels(); ++c) {
                out.at(x, y, c) = integral ? image.at(static_cast<int>(x0) + x, static_cast<int>(y0) + y, c)
                                           : bicubic_sample(image, x0 + x, y0 + y, c);
            }
        }
    }
    return out;
}

namespace {

std::vector<std::size_t> nearest_views(std::span<const Camera> cameras, std::size_t i, int count) {
    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < cameras.size(); ++j) {
        if (j != i) {
            order.push_back(j);
        }
    }
    const Vec3 here = cameras[i].position();
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return (cameras[a].position() - here).squaredNorm() < (cameras[b].position() - here).squaredNorm();
    });
    order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(count)));
    return order;
}

} // namespace

void zoom_step(ZoomState &state, const PipelineConfig &config, SrProvider &provider,
               StepRecord *record) {
    config.validate();
    state.validate();
    const int s = config.zoom_factor_s;
    const int k = state.current_level;

    // Work on a copy so a failure anywhere leaves `state` untouched.
    ZoomState next = state;
    RenderOptions options = config.render;
    options.lod.zoom_factor_s = s;

    const auto cams_k = make_zoom_cameras(next.base_cameras, next.roi, k, s);
    const auto cams_next = make_zoom_cameras(next.base_cameras, next.roi, k + 1, s);
    const int w = cams_k.front().width, h = cams_k.front().height;
    for (const auto &cam : cams_k) {
        if (cam.width != w || cam.height != h || w % s != 0 || h % s != 0) {
            throw InvalidParameter("zoom steps need a shared resolution divisible by s");
        }
    }
    const int lw = w / s, lh = h / s;

    // (1) level-k renders with depth
    std::vector<RenderOutput> renders;
    renders.reserve(cams_k.size());
    for (const auto &cam : cams_k) {
        renders.push_back(render(next.scene, cam, options));
    }

    // (2) neighbours warped into each view
    std::vector<std::vector<WarpedNeighbor>> neighbors(cams_k.size());
    for (std::size_t i = 0; i < cams_k.size(); ++i) {
        for (std::size_t j : nearest_views(cams_k, i, config.neighbor_count)) {
            auto wr = warp_image(renders[j].color, renders[j].depth, renders[i].depth, cams_k[j],
                                 cams_k[i], config.occlusion_tol);
            neighbors[i].push_back({std::move(wr.warped), std::move(wr.valid_mask)});
        }
    }

    // (3) prompt from the coarse view and its zoomed centre
    std::vector<ImageBuffer> anchors, zoom_context;
    for (std::size_t i = 0; i < cams_k.size(); ++i) {
        const double ax = (s - 1) * (cams_k[i].cx + 0.5) / s;
        const double ay = (s - 1) * (cams_k[i].cy + 0.5) / s;
        anchors.push_back(crop(renders[i].color, ax, ay, lw, lh));
        zoom_context.push_back(bicubic_upsample(anchors.back(), s));
    }
    const std::string prompt = request_prompt(renders.front().color, zoom_context.front(), provider);

    // (4) super-resolve every view, then crop to the level k+1 frame
    std::vector<ImageBuffer> sr_outputs, targets;
    for (std::size_t i = 0; i < cams_k.size(); ++i) {
        SrRequest request{renders[i].color, neighbors[i], renders[i].color, zoom_context[i], prompt, s};
        auto response = super_resolve(request, provider);
        const double ox = (s - 1) * (cams_k[i].cx + 0.5);
        const double oy = (s - 1) * (cams_k[i].cy + 0.5);
        targets.push_back(crop(response.hr_image, ox, oy, w, h));
        sr_outputs.push_back(std::move(response.hr_image));
    }

    // (5) new layer
    freeze_active_layer(next.scene);
    SeedOptions seed_options;
    seed_options.zoom_factor = s;
    seed_options.min_footprint_px = config.min_footprint_px;
    seed_options.fallback_count = config.fallback_seed_count;
    seed_options.seed = config.rng_seed + static_cast<std::uint64_t>(k + 1);
    auto seeds = seed_new_layer(next.scene, cams_next, next.roi, seed_options);
    std::vector<PrimitiveId> ids;
    ids.reserve(seeds.size());
    for (auto &p : seeds) {
        ids.push_back(next.scene.stage(std::move(p)));
    }
    add_layer(next.scene, ids, cams_next);

    // (6) optimize the new layer with dual-scale anchoring
    std::vector<TrainingView> views;
    for (std::size_t i = 0; i < cams_next.size(); ++i) {
        views.push_back({targets[i], anchors[i], cams_next[i]});
    }
    Schedule schedule;
    schedule.iterations = config.step_iterations;
    schedule.seed = config.rng_seed + 7919 * static_cast<std::uint64_t>(k + 1);
    schedule.rates = config.rates;
    schedule.scene_extent = camera_extent(next.base_cameras) / std::pow(static_cast<double>(s), k + 1);
    schedule.zoom_factor = s;
    schedule.render = options;
    auto report = optimize_layer(next.scene, views, config.weights, schedule);
    if (config.prune_threshold > 0.0) {
        prune(next.scene, config.prune_threshold);
    }

    next.supervision.push_back({cams_next, targets});
    next.current_level = k + 1;
    next.validate();

    if (record) {
        record->cameras = cams_next;
        record->coarse.clear();
        for (auto &r : renders) {
            record->coarse.push_back(std::move(r.color));
        }
        record->sr_outputs = std::move(sr_outputs);
        record->targets = std::move(targets);
        record->anchors = std::move(anchors);
        record->prompt = prompt;
        record->report = std::move(report);
    }
    state = std::move(next);
}

// ---------------------------------------------------------------------------
// trajectories

std::vector<double> focal_sweep(std::pair<double, double> range, int frame_count) {
    if (frame_count < 1 || !(range.first > 0.0) || !(range.second > 0.0)) {
        throw InvalidParameter("focal sweep needs positive multipliers and at least one frame");
    }
    std::vector<double> mults(frame_count);
    const double ratio = std::log(range.second / range.first);
    for (int f = 0; f < frame_count; ++f) {
        const double t = frame_count > 1 ? static_cast<double>(f) / (frame_count - 1) : 0.0;
        mults[f] = range.first * std::exp(t * ratio);
    }
    return mults;
}

std::vector<ImageBuffer> render_trajectory(const Scene &scene, std::pair<double, double> focal_range,
                                           int frame_count, const Camera &camera_path,
                                           const RenderOptions &options) {
    if (scene.layers.empty()) {
        throw InvalidParameter("trajectory rendering needs a trained layer");
    }
    std::vector<ImageBuffer> frames;
    for (double m : focal_sweep(focal_range, frame_count)) {
        Camera cam = camera_path;
        cam.fx *= m;
        cam.fy *= m;
        frames.push_back(render(scene, cam, options).color);
    }
    return frames;
}

} // namespace zoomsplat
