// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "zoomsplat/camera.hpp"
#include "zoomsplat/image.hpp"
#include "zoomsplat/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace zoomsplat {

namespace fs = std::filesystem;

/// Write through a sibling temp file and rename over `path`.
void atomic_write(const fs::path &path, std::span<const std::uint8_t> bytes);
void atomic_write(const fs::path &path, const std::string &text);
std::vector<std::uint8_t> read_bytes(const fs::path &path);

// Images. Values map to [0, 255] with round-half-up; 16-bit uses 65535.
std::vector<std::uint8_t> encode_png(const ImageBuffer &image, int bit_depth = 8);
ImageBuffer decode_png(std::span<const std::uint8_t> bytes);
void write_png(const fs::path &path, const ImageBuffer &image);
ImageBuffer read_png(const fs::path &path);

// Depth maps as little-endian single-channel PFM.
void write_depth(const fs::path &path, const DepthMap &depth);
DepthMap read_depth(const fs::path &path);

// Scenes as binary little-endian PLY.
std::vector<std::uint8_t> encode_scene(const Scene &scene);
Scene decode_scene(std::span<const std::uint8_t> bytes);
void write_scene(const fs::path &path, const Scene &scene);
Scene read_scene(const fs::path &path);

struct SparsePoint {
    Vec3 position;
    std::optional<Vec3> color; // [0, 1]
};
std::vector<SparsePoint> read_points(const fs::path &path);
void write_points(const fs::path &path, std::span<const SparsePoint> points);

// Cameras as a JSON array.
std::string encode_cameras(std::span<const Camera> cameras);
std::vector<Camera> decode_cameras(const std::string &text);
void write_cameras(const fs::path &path, std::span<const Camera> cameras);
std::vector<Camera> read_cameras(const fs::path &path);

// Plain `key = value` configuration with `#` comments.
using ConfigMap = std::map<std::string, std::string>;
ConfigMap parse_config(const std::string &text);
std::string emit_config(const ConfigMap &config);
ConfigMap read_config(const fs::path &path);

} // namespace zoomsplat
