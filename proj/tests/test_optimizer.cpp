// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "support.hpp"

#include "zoomsplat/error.hpp"
#include "zoomsplat/metrics.hpp"
#include "zoomsplat/optimizer.hpp"
#include "zoomsplat/pipeline.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

using namespace zoomsplat;

namespace {

std::vector<TrainingView> views_of(const zstest::Fixture &f) {
    std::vector<TrainingView> views;
    for (std::size_t i = 0; i < f.cameras.size(); ++i) {
        views.push_back({f.images[i], std::nullopt, f.cameras[i]});
    }
    return views;
}

Scene layered(const Scene &base, std::size_t frozen_count, std::span<const Camera> cams) {
    Scene scene;
    scene.sh_degree = base.sh_degree;
    std::vector<PrimitiveId> a, b;
    for (std::size_t i = 0; i < base.primitives.size(); ++i) {
        (i < frozen_count ? a : b).push_back(scene.stage(base.primitives[i]));
    }
    add_layer(scene, a, cams);
    freeze_active_layer(scene);
    add_layer(scene, b, cams);
    return scene;
}

} // namespace

TEST(OptimizeLayer, ZeroIterationsIsNoOp) {
    const auto f = zstest::synthetic_fixture(3, 20, 2, 32);
    Scene scene = f.scene;
    Schedule schedule;
    schedule.iterations = 0;
    const auto views = views_of(f);
    const TrainingReport report = optimize_layer(scene, views, LossWeights{}, schedule);
    EXPECT_TRUE(report.iterations.empty());
    EXPECT_EQ(scene, f.scene);
}

TEST(OptimizeLayer, FrozenLayerUntouched) {
    auto f = zstest::synthetic_fixture(4, 30, 3, 32);
    Scene scene = layered(f.scene, 15, f.cameras);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 0.02);
    for (auto &p : scene.primitives) {
        p.center += Vec3(n(rng), n(rng), n(rng));
    }
    const Scene before = scene;
    Schedule schedule;
    schedule.iterations = 20;
    schedule.zoom_factor = 4;
    const auto views = views_of(f);
    optimize_layer(scene, views, LossWeights{}, schedule);
    bool active_moved = false;
    for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
        if (scene.primitives[i].lod_layer == 0) {
            EXPECT_EQ(scene.primitives[i], before.primitives[i]);
        } else {
            active_moved = active_moved || !(scene.primitives[i] == before.primitives[i]);
        }
    }
    EXPECT_TRUE(active_moved);
    EXPECT_EQ(scene.layers, before.layers);
}

TEST(OptimizeLayer, ImprovesPerturbedScene) {
    const auto f = zstest::synthetic_fixture(5, 40, 4, 32);
    Scene scene = f.scene;
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0.0, 0.4);
    for (auto &p : scene.primitives) {
        p.sh_coeffs[0] += Vec3(n(rng), n(rng), n(rng));
        p.opacity_logit += n(rng);
    }
    const auto views = views_of(f);
    double before = 0.0;
    for (const auto &v : views) {
        before += psnr(render(scene, v.camera, RenderOptions{}).color, v.target) / views.size();
    }
    Schedule schedule;
    schedule.iterations = 150;
    schedule.seed = 3;
    schedule.scene_extent = camera_extent(f.cameras);
    const TrainingReport report = optimize_layer(scene, views, LossWeights{}, schedule);
    EXPECT_EQ(report.iterations.size(), 150u);
    EXPECT_EQ(report.view_psnr.size(), views.size());
    EXPECT_GT(report.final_psnr, before + 1.0) << before;

    std::istringstream lines(report.to_jsonl());
    std::string line;
    std::size_t count = 0;
    while (std::getline(lines, line)) {
        const auto j = nlohmann::json::parse(line);
        for (const char *key : {"iteration", "total", "hr", "lr", "geo", "psnr"}) {
            EXPECT_TRUE(j.contains(key)) << key;
        }
        ++count;
    }
    EXPECT_EQ(count, 150u);
}

TEST(OptimizeLayer, NonFiniteLossAborts) {
    auto f = zstest::synthetic_fixture(6, 10, 1, 32);
    f.images[0].at(3, 3, 1) = std::numeric_limits<double>::quiet_NaN();
    Scene scene = f.scene;
    Schedule schedule;
    schedule.iterations = 5;
    const auto views = views_of(f);
    try {
        optimize_layer(scene, views, LossWeights{}, schedule);
        FAIL() << "expected NonFiniteLoss";
    } catch (const NonFiniteLoss &e) {
        EXPECT_EQ(e.iteration(), 0u);
    }
}

TEST(OptimizeLayer, RequiresActiveLayer) {
    auto f = zstest::synthetic_fixture(7, 10, 1, 32);
    freeze_active_layer(f.scene);
    Schedule schedule;
    schedule.iterations = 1;
    const auto views = views_of(f);
    EXPECT_THROW(optimize_layer(f.scene, views, LossWeights{}, schedule), OwnershipError);
}

TEST(OptimState, FirstStepIsSignedLearningRate) {
    Scene scene;
    GaussianPrimitive p;
    p.center = Vec3(0.1, 0.2, 0.3);
    p.rotation = Vec4(1.0, 0.0, 0.0, 0.0);
    const std::vector<PrimitiveId> ids{scene.stage(p)};
    add_layer(scene, ids, {});
    SceneGradients g = SceneGradients::zeros_like(scene);
    g.center[0] = Vec3(2.0, -0.5, 0.0);
    g.log_scale[0] = Vec3(1e-3, 0.0, -7.0);
    g.opacity_logit[0] = -3.0;
    const LearningRates rates;
    OptimState state(ids, 0);
    state.step(scene, g, rates, 0.01);
    // Bias-corrected Adam moves by exactly lr * sign(g) on its first step.
    const auto &q = scene.primitives[0];
    EXPECT_NEAR(q.center.x(), 0.1 - 0.01, 1e-12);
    EXPECT_NEAR(q.center.y(), 0.2 + 0.01, 1e-12);
    EXPECT_EQ(q.center.z(), 0.3);
    EXPECT_NEAR(q.log_scale.x(), -rates.log_scale, 1e-12);
    EXPECT_NEAR(q.log_scale.z(), rates.log_scale, 1e-12);
    EXPECT_NEAR(q.opacity_logit, rates.opacity_logit, 1e-12);
    EXPECT_NEAR(q.rotation.norm(), 1.0, 1e-12);
    EXPECT_EQ(state.step_count(), 1u);
    EXPECT_TRUE(state.moments_finite());
}

TEST(Prune, Examples) {
    Scene scene;
    std::vector<PrimitiveId> ids;
    for (int i = 0; i < 5; ++i) {
        GaussianPrimitive p;
        p.center = Vec3(0.1 * i, 0.0, 0.0);
        p.opacity_logit = logit(0.9);
        ids.push_back(scene.stage(p));
    }
    add_layer(scene, ids, {});
    EXPECT_EQ(prune(scene), 0u);
    scene.primitives[2].opacity_logit = logit(0.001);
    EXPECT_EQ(prune(scene, 0.005), 1u);
    EXPECT_EQ(scene.primitives.size(), 4u);
    EXPECT_EQ(scene.layers[0].primitive_ids, (std::vector<PrimitiveId>{0, 1, 2, 3}));
    EXPECT_DOUBLE_EQ(scene.primitives[2].center.x(), 0.1 * 3);
    EXPECT_NO_THROW(scene.validate());
}

TEST(Prune, FrozenLayerIsKept) {
    const auto f = zstest::synthetic_fixture(8, 20, 1, 32);
    Scene scene = layered(f.scene, 10, f.cameras);
    scene.primitives[0].opacity_logit = logit(1e-4);
    EXPECT_EQ(prune(scene), 0u);
}

TEST(Prune, RenderBarelyChanges) {
    auto f = zstest::synthetic_fixture(9, 60, 2, 48);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(1e-4, 4.9e-3);
    for (std::size_t i = 0; i < f.scene.primitives.size(); i += 3) {
        f.scene.primitives[i].opacity_logit = logit(u(rng));
    }
    Scene pruned = f.scene;
    EXPECT_EQ(prune(pruned, 0.005), 20u);
    for (const auto &cam : f.cameras) {
        const auto a = render(f.scene, cam, RenderOptions{}).color;
        const auto b = render(pruned, cam, RenderOptions{}).color;
        EXPECT_LT(zstest::mean_abs_diff(a, b), 1e-3);
    }
}

TEST(Seeding, FallbackWhenRoiIsEmpty) {
    auto f = zstest::synthetic_fixture(10, 20, 4, 32);
    freeze_active_layer(f.scene);
    const Roi far_away{Vec3(0.0, 30.0, 0.0), 0.5};
    SeedOptions options;
    options.fallback_count = 64;
    bool fallback = false;
    const auto seeds = seed_new_layer(f.scene, f.cameras, far_away, options, &fallback);
    EXPECT_TRUE(fallback);
    ASSERT_EQ(seeds.size(), 64u);
    for (const auto &s : seeds) {
        EXPECT_TRUE(far_away.contains(s.center));
        EXPECT_NEAR(s.opacity(), 0.1, 1e-12);
        EXPECT_EQ(s.lod_layer, kUnassignedLayer);
        EXPECT_NEAR(s.scale().x(), 0.5 / 4.0, 1e-12);
    }
}

TEST(Seeding, SingleIsotropicParent) {
    const auto rig = zstest::convergent_rig(6, 4.0, 120.0, 64);
    const Roi roi = compute_roi(rig);
    Scene scene;
    scene.sh_degree = 0;
    GaussianPrimitive p;
    p.center = roi.center + Vec3(0.01, 0.0, 0.0);
    p.log_scale = Vec3::Constant(std::log(0.05));
    p.opacity_logit = 1.3;
    const std::vector<PrimitiveId> ids{scene.stage(p)};
    add_layer(scene, ids, rig);
    freeze_active_layer(scene);
    const auto zoom = make_zoom_cameras(rig, roi, 1, 4);
    const auto seeds = seed_new_layer(scene, zoom, roi, SeedOptions{});
    ASSERT_EQ(seeds.size(), 1u);
    EXPECT_EQ(seeds[0].center, p.center);
    EXPECT_NEAR(seeds[0].scale().x(), 0.05 / 4.0, 1e-12);
    EXPECT_EQ(seeds[0].opacity_logit, p.opacity_logit);

    // A frozen layer is required first.
    Scene active = scene;
    active.layers[0].frozen = false;
    EXPECT_THROW(seed_new_layer(active, zoom, roi, SeedOptions{}), OwnershipError);
}

TEST(Seeding, PsiRefShrinksByZoomFactor) {
    const auto rig = zstest::convergent_rig(8, 4.0, 120.0, 64);
    const Roi roi = compute_roi(rig);
    const auto level0 = make_zoom_cameras(rig, roi, 0, 4);
    const auto level1 = make_zoom_cameras(rig, roi, 1, 4);
    std::mt19937_64 rng(5);
    Scene scene;
    scene.sh_degree = 1;
    std::vector<PrimitiveId> ids;
    for (int i = 0; i < 30; ++i) {
        ids.push_back(scene.stage(zstest::random_primitive(rng, 1, roi.center, 0.8 * roi.radius,
                                                           std::log(0.03), std::log(0.05))));
    }
    add_layer(scene, ids, level0);
    freeze_active_layer(scene);
    const auto seeds = seed_new_layer(scene, level1, roi, SeedOptions{});
    ASSERT_FALSE(seeds.empty());
    for (const auto &s : seeds) {
        double parent_psi = 0.0;
        for (const auto &p : scene.primitives) {
            if (p.center == s.center) {
                parent_psi = p.psi_ref;
            }
        }
        ASSERT_GT(parent_psi, 0.0);
        EXPECT_NEAR(s.psi_ref / parent_psi, 0.25, 0.2 * 0.25);
    }
}
