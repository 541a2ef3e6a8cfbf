// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "zoomsplat/camera.hpp"
#include "zoomsplat/scene.hpp"

#include <span>

namespace zoomsplat {

struct LodConfig {
    double zoom_factor_s = 4.0;
    /// Lower bound on the weight of the coarsest layer.
    double weight_floor = 0.0;

    void validate() const;
};

/// Distance from the camera center to `center`, divided by fx.
double scale_projection_coefficient(const Camera &camera, const Vec3 &center);

/// max(0, 1 - |log_s(psi_now / psi_ref)|).
double lod_weight(double psi_now, double psi_ref, double s);

/// Weight including the coarsest-layer rule: layer 0 keeps full weight on
/// the zoom-out side (psi_now >= psi_ref) so the scene never empties.
double layer_weight(double psi_now, double psi_ref, std::int32_t layer, const LodConfig &config);

/// sigmoid(opacity_logit) scaled by the layer weight under `camera`.
double effective_opacity(const GaussianPrimitive &primitive, const Camera &camera,
                         const LodConfig &config);

/// Mean scale projection coefficient of `center` over `cameras`.
double mean_psi(std::span<const Camera> cameras, const Vec3 &center);

/// Freeze the active layer; no-op when every layer is frozen.
void freeze_active_layer(Scene &scene);

/// Open a new active layer owning the staged primitives `seed_ids`. Each
/// seed's psi_ref is stamped as its mean coefficient over `stamp_cameras`.
/// Throws OwnershipError when a layer is still active or a seed is owned.
const LodLayer &add_layer(Scene &scene, std::span<const PrimitiveId> seed_ids,
                          std::span<const Camera> stamp_cameras);

} // namespace zoomsplat
