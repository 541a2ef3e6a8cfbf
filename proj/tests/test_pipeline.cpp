// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "support.hpp"

#include "zoomsplat/error.hpp"
#include "zoomsplat/lod.hpp"
#include "zoomsplat/pipeline.hpp"

#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace zoomsplat;

namespace {

double axis_cost(std::span<const Camera> cams, const Vec3 &p) {
    double cost = 0.0;
    for (const auto &c : cams) {
        const Vec3 v = p - c.position();
        cost += (v - v.dot(c.forward()) * c.forward()).squaredNorm();
    }
    return cost;
}

// Coarse-to-fine lattice search for the point closest to every optical axis.
Vec3 grid_search_roi(std::span<const Camera> cams, Vec3 start, double span) {
    Vec3 best = start;
    for (int round = 0; round < 40; ++round) {
        Vec3 next = best;
        double next_cost = axis_cost(cams, best);
        for (int i = -5; i <= 5; ++i) {
            for (int j = -5; j <= 5; ++j) {
                for (int k = -5; k <= 5; ++k) {
                    const Vec3 p = best + span / 5.0 * Vec3(i, j, k);
                    const double c = axis_cost(cams, p);
                    if (c < next_cost) {
                        next_cost = c;
                        next = p;
                    }
                }
            }
        }
        best = next;
        span *= 0.5;
    }
    return best;
}

PipelineConfig small_config() {
    PipelineConfig config;
    config.zoom_factor_s = 4;
    config.step_iterations = 20;
    config.fallback_seed_count = 200;
    config.rng_seed = 3;
    return config;
}

zstest::Fixture small_fixture() { return zstest::synthetic_fixture(21, 30, 4, 48); }

class FailingProvider final : public SrProvider {
  public:
    explicit FailingProvider(bool wrong_size) : wrong_size_(wrong_size) {}
    SrProviderKind kind() const noexcept override { return SrProviderKind::remote; }
    SrResponse super_resolve(const SrRequest &request) override {
        if (!wrong_size_) {
            throw TransportError("sidecar went away");
        }
        SrResponse r;
        r.hr_image = ImageBuffer(request.lr_image.width(), request.lr_image.height(), 3, 0.5);
        r.prompt_used = request.prompt;
        r.provider = kind();
        return r;
    }
    std::string request_prompt(const ImageBuffer &, const ImageBuffer &) override { return "a photo"; }

  private:
    bool wrong_size_;
};

} // namespace

TEST(Roi, SymmetricPairMeetsAtOrigin) {
    const std::vector<Camera> cams{
        Camera::look_at(Vec3(3.0, 0.0, 0.0), Vec3::Zero(), Vec3(0, 1, 0), 50.0, 32, 32),
        Camera::look_at(Vec3(-3.0, 0.0, 0.0), Vec3::Zero(), Vec3(0, 1, 0), 50.0, 32, 32),
        Camera::look_at(Vec3(0.0, 0.0, 3.0), Vec3::Zero(), Vec3(0, 1, 0), 50.0, 32, 32)};
    const Roi roi = compute_roi(cams);
    EXPECT_LE(roi.center.norm(), 1e-9);
    EXPECT_NEAR(roi.radius, 0.3, 1e-9);
}

TEST(Roi, OpposedRingIsNotTreatedAsParallel) {
    // Forward vectors of a symmetric ring cancel out; the axes still meet.
    std::vector<Camera> cams;
    for (int i = 0; i < 4; ++i) {
        const double a = 0.5 * std::numbers::pi * i;
        const Vec3 eye(4.0 * std::sin(a), i % 2 ? -0.3 : 0.3, -4.0 * std::cos(a));
        cams.push_back(Camera::look_at(eye, Vec3::Zero(), Vec3(0, 1, 0), 60.0, 32, 32));
    }
    EXPECT_LE(compute_roi(cams).center.norm(), 1e-9);
}

TEST(Roi, ParallelAxesUseMidDepth) {
    const Camera cam = Camera::look_at(Vec3(1.0, 2.0, -3.0), Vec3(1.0, 2.0, 0.0), Vec3(0, 1, 0), 50.0, 32, 32);
    const std::vector<Camera> cams{cam, cam};
    const Roi roi = compute_roi(cams);
    const double mid = 0.5 * (cam.near + cam.far);
    EXPECT_NEAR((roi.center - Vec3(1.0, 2.0, -3.0 + mid)).norm(), 0.0, 1e-9);
    EXPECT_THROW(compute_roi(std::span<const Camera>(cams.data(), 1)), InvalidParameter);
}

TEST(Roi, MatchesGridSearchOnSkewAxes) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> jitter(0.0, 0.03);
    auto cams = zstest::convergent_rig(6, 4.0, 60.0, 48, Vec3(0.2, -0.1, 0.15));
    for (auto &c : cams) {
        const Mat3 tilt = (Eigen::AngleAxisd(jitter(rng), Vec3::UnitX()) *
                           Eigen::AngleAxisd(jitter(rng), Vec3::UnitY()))
                              .toRotationMatrix();
        const Vec3 eye = c.position();
        c.rotation_wc = tilt * c.rotation_wc;
        c.translation_wc = -c.rotation_wc * eye;
    }
    const Roi roi = compute_roi(cams);
    const Vec3 oracle = grid_search_roi(cams, Vec3::Zero(), 2.0);
    EXPECT_LE((roi.center - oracle).norm(), 1e-6);
    for (const auto &c : cams) {
        EXPECT_TRUE(inside_frustum(c, roi.center));
    }
}

TEST(ZoomCameras, FocalScalesAndPsiShrinks) {
    const auto fx = small_fixture();
    const Roi roi = compute_roi(fx.cameras);
    for (int s : {2, 4}) {
        const auto level0 = make_zoom_cameras(fx.cameras, roi, 0, s);
        for (int level = 1; level <= 2; ++level) {
            const auto cams = make_zoom_cameras(fx.cameras, roi, level, s);
            ASSERT_EQ(cams.size(), fx.cameras.size());
            for (std::size_t i = 0; i < cams.size(); ++i) {
                EXPECT_DOUBLE_EQ(cams[i].fx, fx.cameras[i].fx * std::pow(s, level));
                EXPECT_NEAR((cams[i].position() - fx.cameras[i].position()).norm(), 0.0, 1e-12);
                const auto centre = cams[i].project(cams[i].to_camera(roi.center));
                ASSERT_TRUE(centre.has_value());
                EXPECT_NEAR(centre->x(), cams[i].cx, 1e-6);
                EXPECT_NEAR(centre->y(), cams[i].cy, 1e-6);
                EXPECT_NEAR(scale_projection_coefficient(cams[i], roi.center),
                            scale_projection_coefficient(level0[i], roi.center) / std::pow(s, level), 1e-12);
            }
        }
    }
    EXPECT_THROW(make_zoom_cameras(fx.cameras, roi, 1, 1), InvalidParameter);
}

TEST(ZoomCameras, DropsCamerasFacingAway) {
    const auto fx = small_fixture();
    const Roi roi = compute_roi(fx.cameras);
    auto cams = fx.cameras;
    cams[0] = Camera::look_at(Vec3(0.0, 0.0, 0.3 * roi.radius), Vec3(0.0, 0.0, 5.0), Vec3(0, 1, 0), 50.0, 48, 48);
    cams[0].translation_wc = -cams[0].rotation_wc * (roi.center + Vec3(0.0, 0.0, 1.0));
    EXPECT_EQ(make_zoom_cameras(cams, roi, 1, 4).size(), cams.size() - 1);
}

TEST(ZoomStep, AddsFrozenLayerAndAdvancesLevel) {
    const auto fx = small_fixture();
    ZoomState state = make_zoom_state(fx.scene, fx.cameras, fx.images);
    const std::size_t base_count = state.scene.primitives.size();
    BuiltinSrProvider provider;
    StepRecord record;
    zoom_step(state, small_config(), provider, &record);

    EXPECT_EQ(state.current_level, 1);
    ASSERT_EQ(state.scene.layers.size(), 2u);
    EXPECT_TRUE(state.scene.layers[0].frozen);
    EXPECT_FALSE(state.scene.layers[1].frozen);
    EXPECT_EQ(state.scene.layers[0].primitive_ids.size(), base_count);
    EXPECT_GT(state.scene.layers[1].primitive_ids.size(), 0u);
    EXPECT_NO_THROW(state.validate());
    ASSERT_EQ(state.supervision.size(), 2u);
    EXPECT_EQ(state.supervision[1].images.size(), record.targets.size());
    EXPECT_EQ(record.cameras.size(), fx.cameras.size());
    for (std::size_t i = 0; i < record.targets.size(); ++i) {
        EXPECT_EQ(record.targets[i].width(), 48);
        EXPECT_EQ(record.anchors[i].width(), 12);
        EXPECT_EQ(record.sr_outputs[i].width(), 192);
    }
    EXPECT_EQ(record.report.iterations.size(), 20u);
    EXPECT_EQ(record.prompt, std::string(kDefaultPrompt));

    // Frozen layer parameters are untouched by the step.
    for (std::size_t i = 0; i < base_count; ++i) {
        const auto &before = fx.scene.primitives[i];
        const auto &after = state.scene.primitives[state.scene.layers[0].primitive_ids[i]];
        EXPECT_EQ(before.center, after.center);
        EXPECT_EQ(before.sh_coeffs, after.sh_coeffs);
        EXPECT_EQ(before.opacity_logit, after.opacity_logit);
    }
}

TEST(ZoomStep, FailureLeavesStateUntouched) {
    const auto fx = small_fixture();
    for (bool wrong_size : {false, true}) {
        ZoomState state = make_zoom_state(fx.scene, fx.cameras, fx.images);
        const auto ply = encode_scene(state.scene);
        FailingProvider provider(wrong_size);
        if (wrong_size) {
            EXPECT_THROW(zoom_step(state, small_config(), provider), ContractViolation);
        } else {
            EXPECT_THROW(zoom_step(state, small_config(), provider), TransportError);
        }
        EXPECT_EQ(encode_scene(state.scene), ply);
        EXPECT_EQ(state.scene, fx.scene);
        EXPECT_EQ(state.current_level, 0);
        EXPECT_EQ(state.supervision.size(), 1u);
    }
}

TEST(ZoomStep, RejectsBadConfig) {
    const auto fx = small_fixture();
    ZoomState state = make_zoom_state(fx.scene, fx.cameras, fx.images);
    BuiltinSrProvider provider;
    PipelineConfig config = small_config();
    config.zoom_factor_s = 1;
    EXPECT_THROW(zoom_step(state, config, provider), InvalidParameter);
    config = small_config();
    config.num_zoom_steps = 0;
    EXPECT_NO_THROW(config.validate());
    EXPECT_EQ(state.current_level, 0);
}

TEST(Trajectory, SingleFrameIsPlainRender) {
    const auto fx = small_fixture();
    const auto frames = render_trajectory(fx.scene, {1.0, 16.0}, 1, fx.cameras[0], RenderOptions{});
    ASSERT_EQ(frames.size(), 1u);
    EXPECT_EQ(frames[0], render(fx.scene, fx.cameras[0], RenderOptions{}).color);

    const auto sweep = focal_sweep({1.0, 16.0}, 5);
    ASSERT_EQ(sweep.size(), 5u);
    for (std::size_t i = 0; i < sweep.size(); ++i) {
        EXPECT_NEAR(sweep[i], std::pow(2.0, static_cast<double>(i)), 1e-12);
    }
    EXPECT_THROW(focal_sweep({1.0, 2.0}, 0), InvalidParameter);
    EXPECT_THROW(render_trajectory(Scene{}, {1.0, 2.0}, 2, fx.cameras[0], RenderOptions{}), InvalidParameter);
}

TEST(Crop, IntegerAndFractionalOffsets) {
    const ImageBuffer img = zstest::smooth_image(20, 16, 3);
    const ImageBuffer c = crop(img, 3.0, 5.0, 6, 4);
    ASSERT_EQ(c.width(), 6);
    ASSERT_EQ(c.height(), 4);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 6; ++x) {
            for (int ch = 0; ch < 3; ++ch) {
                EXPECT_EQ(c.at(x, y, ch), img.at(x + 3, y + 5, ch));
            }
        }
    }
    const ImageBuffer flat(20, 16, 1, 0.3);
    const ImageBuffer f = crop(flat, 4.5, 2.25, 8, 8);
    for (double v : f.data()) {
        EXPECT_NEAR(v, 0.3, 1e-12);
    }
}

TEST(Config, MapRoundTrip) {
    PipelineConfig config;
    config.zoom_factor_s = 2;
    config.num_zoom_steps = 3;
    config.weights.lambda_hr = 0.7;
    config.static_prompt = "a crisp macro photograph";
    config.rng_seed = 12345;
    config.sr_provider = SrProviderKind::remote;
    config.sr_endpoint = "http://127.0.0.1:9000";
    const ConfigMap map = pipeline_config_to_map(config);
    const PipelineConfig back = pipeline_config_from_map(parse_config(emit_config(map)));
    EXPECT_EQ(pipeline_config_to_map(back), map);
    EXPECT_EQ(back.zoom_factor_s, 2);
    EXPECT_EQ(back.weights.lambda_hr, 0.7);
    EXPECT_EQ(back.static_prompt, config.static_prompt);
    EXPECT_EQ(back.sr_provider, SrProviderKind::remote);

    ConfigMap bad = map;
    bad["zoom_factor_s"] = "four";
    EXPECT_THROW(pipeline_config_from_map(bad), LoadError);
    ConfigMap extra = map;
    extra["unknown_key"] = "1";
    EXPECT_NO_THROW(pipeline_config_from_map(extra));
}
