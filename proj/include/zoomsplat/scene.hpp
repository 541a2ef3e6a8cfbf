// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "zoomsplat/gaussian.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace zoomsplat {

using PrimitiveId = std::uint32_t;

/// Tag carried by primitives staged in the store but not yet owned by a layer.
inline constexpr std::int32_t kUnassignedLayer = -1;

/// A band of primitives created at one zoom step.
struct LodLayer {
    std::uint32_t index = 0;
    int zoom_level = 0;
    bool frozen = false;
    std::vector<PrimitiveId> primitive_ids;

    friend bool operator==(const LodLayer &, const LodLayer &) = default;
};

/// Primitive store plus the layer hierarchy. A primitive's id is its index
/// in `primitives`; operations that remove primitives renumber the layers.
struct Scene {
    int sh_degree = 0;
    std::vector<GaussianPrimitive> primitives;
    std::vector<LodLayer> layers;

    /// Append a primitive without a layer and return its id.
    PrimitiveId stage(GaussianPrimitive primitive);

    /// Index of the single non-frozen layer, if any.
    std::optional<std::size_t> active_layer() const;

    /// Throws InvariantViolation when layer bookkeeping is inconsistent.
    void validate() const;

    friend bool operator==(const Scene &, const Scene &) = default;
};

} // namespace zoomsplat

namespace zoomsplat {

/// Spherical region of interest targeted by zooming.
struct Roi {
    Vec3 center = Vec3::Zero();
    double radius = 0.0;

    bool contains(const Vec3 &p) const { return (p - center).norm() <= radius; }
};

} // namespace zoomsplat
