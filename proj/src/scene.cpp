// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "zoomsplat/scene.hpp"

#include "zoomsplat/error.hpp"

#include <string>

namespace zoomsplat {

PrimitiveId Scene::stage(GaussianPrimitive primitive) {
    primitive.lod_layer = kUnassignedLayer;
    primitives.push_back(std::move(primitive));
    return static_cast<PrimitiveId>(primitives.size() - 1);
}

std::optional<std::size_t> Scene::active_layer() const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (!layers[i].frozen) {
            return i;
        }
    }
    return std::nullopt;
}

void Scene::validate() const {
    std::size_t active = 0;
    std::vector<int> owner(primitives.size(), -1);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto &layer = layers[i];
        if (layer.index != i) {
            throw InvariantViolation("layer indices must be contiguous from 0");
        }
        if (!layer.frozen) {
            ++active;
        }
        for (PrimitiveId id : layer.primitive_ids) {
            if (id >= primitives.size()) {
                throw InvariantViolation("layer references a missing primitive");
            }
            if (owner[id] != -1) {
                throw InvariantViolation("primitive " + std::to_string(id) +
                                         " is owned by two layers");
            }
            owner[id] = static_cast<int>(i);
            if (primitives[id].lod_layer != static_cast<std::int32_t>(i)) {
                throw InvariantViolation("primitive " + std::to_string(id) +
                                         " carries the wrong layer tag");
            }
        }
    }
    if (active > 1) {
        throw InvariantViolation("at most one layer may be active");
    }
    for (std::size_t id = 0; id < primitives.size(); ++id) {
        if (owner[id] == -1 && primitives[id].lod_layer != kUnassignedLayer) {
            throw InvariantViolation("primitive " + std::to_string(id) +
                                     " is tagged with a layer that does not own it");
        }
    }
}

} // namespace zoomsplat
