// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "zoomsplat/lod.hpp"

#include "zoomsplat/error.hpp"

#include <algorithm>
#include <cmath>

namespace zoomsplat {

void LodConfig::validate() const {
    if (!(zoom_factor_s > 1.0) || !std::isfinite(zoom_factor_s)) {
        throw InvalidParameter("zoom factor must be > 1");
    }
    if (!(weight_floor >= 0.0) || weight_floor > 1.0) {
        throw InvalidParameter("weight floor must be in [0, 1]");
    }
}

double scale_projection_coefficient(const Camera &camera, const Vec3 &center) {
    if (!center.allFinite()) {
        throw InvalidParameter("primitive center must be finite");
    }
    const double d = (camera.position() - center).norm();
    if (!(d > 0.0)) {
        throw DegenerateGeometry("primitive center coincides with the camera position");
    }
    return d / camera.fx;
}

double lod_weight(double psi_now, double psi_ref, double s) {
    if (!(psi_now > 0.0) || !(psi_ref > 0.0) || !(s > 1.0)) {
        throw InvalidParameter("lod_weight requires positive coefficients and s > 1");
    }
    const double level_offset = std::abs(std::log(psi_now) - std::log(psi_ref)) / std::log(s);
    return std::max(0.0, 1.0 - level_offset);
}

double layer_weight(double psi_now, double psi_ref, std::int32_t layer, const LodConfig &config) {
    if (layer == 0) {
        if (psi_now >= psi_ref) {
            return 1.0;
        }
        return std::max(config.weight_floor, lod_weight(psi_now, psi_ref, config.zoom_factor_s));
    }
    return lod_weight(psi_now, psi_ref, config.zoom_factor_s);
}

double effective_opacity(const GaussianPrimitive &p, const Camera &camera, const LodConfig &config) {
    if (p.lod_layer < 0) {
        throw OwnershipError("primitive does not belong to a registered layer");
    }
    const double psi = scale_projection_coefficient(camera, p.center);
    return p.opacity() * layer_weight(psi, p.psi_ref, p.lod_layer, config);
}

double mean_psi(std::span<const Camera> cameras, const Vec3 &center) {
    if (cameras.empty()) {
        throw InvalidParameter("psi stamping needs at least one camera");
    }
    double sum = 0.0;
    for (const auto &cam : cameras) {
        sum += scale_projection_coefficient(cam, center);
    }
    return sum / static_cast<double>(cameras.size());
}

void freeze_active_layer(Scene &scene) {
    if (auto active = scene.active_layer()) {
        scene.layers[*active].frozen = true;
    }
}

const LodLayer &add_layer(Scene &scene, std::span<const PrimitiveId> seed_ids,
                          std::span<const Camera> stamp_cameras) {
    if (scene.active_layer()) {
        throw OwnershipError("the current active layer must be frozen before adding a layer");
    }
    for (PrimitiveId id : seed_ids) {
        if (id >= scene.primitives.size()) {
            throw OwnershipError("seed id is not in the scene store");
        }
        if (scene.primitives[id].lod_layer != kUnassignedLayer) {
            throw OwnershipError("seed primitive is already owned by another layer");
        }
    }
    std::vector<PrimitiveId> ids(seed_ids.begin(), seed_ids.end());
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
        throw OwnershipError("duplicate seed id");
    }
    LodLayer layer;
    layer.index = static_cast<std::uint32_t>(scene.layers.size());
    layer.zoom_level = static_cast<int>(layer.index);
    layer.frozen = false;
    for (PrimitiveId id : ids) {
        auto &p = scene.primitives[id];
        if (!stamp_cameras.empty()) {
            p.psi_ref = mean_psi(stamp_cameras, p.center);
        }
        p.lod_layer = static_cast<std::int32_t>(layer.index);
    }
    layer.primitive_ids = std::move(ids);
    scene.layers.push_back(std::move(layer));
    return scene.layers.back();
}

} // namespace zoomsplat
