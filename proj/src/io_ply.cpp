// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "zoomsplat/io.hpp"

#include "zoomsplat/error.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_map>

namespace zoomsplat {

namespace {

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

std::size_t type_size(PlyType t) {
    switch (t) {
    case PlyType::i8:
    case PlyType::u8: return 1;
    case PlyType::i16:
    case PlyType::u16: return 2;
    case PlyType::i32:
    case PlyType::u32:
    case PlyType::f32: return 4;
    case PlyType::f64: return 8;
    }
    return 0;
}

PlyType parse_type(const std::string &name) {
    static const std::unordered_map<std::string, PlyType> table{
        {"char", PlyType::i8},    {"int8", PlyType::i8},     {"uchar", PlyType::u8},
        {"uint8", PlyType::u8},   {"short", PlyType::i16},   {"int16", PlyType::i16},
        {"ushort", PlyType::u16}, {"uint16", PlyType::u16},  {"int", PlyType::i32},
        {"int32", PlyType::i32},  {"uint", PlyType::u32},    {"uint32", PlyType::u32},
        {"float", PlyType::f32},  {"float32", PlyType::f32}, {"double", PlyType::f64},
        {"float64", PlyType::f64}};
    const auto it = table.find(name);
    if (it == table.end()) {
        throw LoadError(fmt::format("unsupported PLY property type '{}'", name));
    }
    return it->second;
}

double read_value(const std::uint8_t *p, PlyType t) {
    std::uint64_t raw = 0;
    for (std::size_t b = 0; b < type_size(t); ++b) {
        raw |= static_cast<std::uint64_t>(p[b]) << (8 * b);
    }
    switch (t) {
    case PlyType::i8: return static_cast<std::int8_t>(raw);
    case PlyType::u8: return static_cast<std::uint8_t>(raw);
    case PlyType::i16: return static_cast<std::int16_t>(raw);
    case PlyType::u16: return static_cast<std::uint16_t>(raw);
    case PlyType::i32: return static_cast<std::int32_t>(raw);
    case PlyType::u32: return static_cast<std::uint32_t>(raw);
    case PlyType::f32: return std::bit_cast<float>(static_cast<std::uint32_t>(raw));
    case PlyType::f64: return std::bit_cast<double>(raw);
    }
    return 0.0;
}

struct PlyProperty {
    std::string name;
    PlyType type;
};

/// The vertex element of a PLY file, one row of doubles per vertex.
struct VertexTable {
    std::vector<PlyProperty> properties;
    std::vector<std::string> comments;
    std::size_t count = 0;
    std::vector<double> values; // row-major

    std::optional<std::size_t> column(const std::string &name) const {
        for (std::size_t k = 0; k < properties.size(); ++k) {
            if (properties[k].name == name) {
                return k;
            }
        }
        return std::nullopt;
    }
    double at(std::size_t row, std::size_t col) const { return values[row * properties.size() + col]; }
};

VertexTable parse_ply(std::span<const std::uint8_t> bytes) {
    VertexTable table;
    std::size_t pos = 0;
    auto next_line = [&]() -> std::string {
        const auto begin = bytes.begin() + static_cast<std::ptrdiff_t>(pos);
        const auto nl = std::find(begin, bytes.end(), std::uint8_t('\n'));
        if (nl == bytes.end()) {
            throw LoadError("malformed PLY header: missing end_header");
        }
        std::string line(begin, nl);
        pos = static_cast<std::size_t>(nl - bytes.begin()) + 1;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        return line;
    };
    if (next_line() != "ply") {
        throw LoadError("malformed PLY header: bad magic");
    }
    std::string format;
    bool in_vertex = false, seen_vertex = false, vertex_first = false;
    for (;;) {
        const std::string line = next_line();
        std::istringstream in(line);
        std::string key;
        in >> key;
        if (key == "end_header") {
            break;
        }
        if (key == "format") {
            in >> format;
        } else if (key == "comment") {
            table.comments.push_back(line.size() > 8 ? line.substr(8) : std::string());
        } else if (key == "element") {
            std::string name;
            long long n = -1;
            in >> name >> n;
            if (!in || n < 0) {
                throw LoadError(fmt::format("malformed PLY element line '{}'", line));
            }
            in_vertex = name == "vertex";
            if (in_vertex) {
                vertex_first = !seen_vertex && table.properties.empty();
                seen_vertex = true;
                table.count = static_cast<std::size_t>(n);
            } else if (!seen_vertex) {
                throw LoadError("PLY elements before 'vertex' are not supported");
            }
        } else if (key == "property") {
            if (!in_vertex) {
                continue;
            }
            std::string type, name;
            in >> type >> name;
            if (type == "list") {
                throw LoadError("list properties on vertices are not supported");
            }
            if (!in) {
                throw LoadError(fmt::format("malformed PLY property line '{}'", line));
            }
            table.properties.push_back({name, parse_type(type)});
        } else if (!key.empty() && key != "obj_info") {
            throw LoadError(fmt::format("malformed PLY header line '{}'", line));
        }
    }
    if (!seen_vertex || !vertex_first) {
        throw LoadError("PLY file has no vertex element");
    }
    const std::size_t ncols = table.properties.size();
    table.values.resize(table.count * ncols);

    if (format == "ascii") {
        std::string body(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
        std::istringstream in(body);
        for (std::size_t r = 0; r < table.count; ++r) {
            for (std::size_t c = 0; c < ncols; ++c) {
                if (!(in >> table.values[r * ncols + c])) {
                    throw LoadError(fmt::format("truncated PLY payload at vertex {}", r), r);
                }
            }
        }
        return table;
    }
    if (format != "binary_little_endian") {
        throw LoadError(fmt::format("unsupported PLY format '{}'", format));
    }
    std::size_t stride = 0;
    for (const auto &p : table.properties) {
        stride += type_size(p.type);
    }
    for (std::size_t r = 0; r < table.count; ++r) {
        if (pos + stride > bytes.size()) {
            throw LoadError(fmt::format("truncated PLY payload at vertex {}", r), r);
        }
        for (std::size_t c = 0; c < ncols; ++c) {
            table.values[r * ncols + c] = read_value(bytes.data() + pos, table.properties[c].type);
            pos += type_size(table.properties[c].type);
        }
    }
    return table;
}

void put_f32(std::vector<std::uint8_t> &out, double v) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int b = 0; b < 4; ++b) {
        out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
}

void put_i32(std::vector<std::uint8_t> &out, std::int32_t v) {
    const auto bits = static_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) {
        out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
}

void append(std::vector<std::uint8_t> &out, const std::string &text) {
    out.insert(out.end(), text.begin(), text.end());
}

constexpr std::string_view kLayerComment = "zoomsplat_layer";

} // namespace

std::vector<std::uint8_t> encode_scene(const Scene &scene) {
    scene.validate();
    const int ncoef = sh_coeff_count(scene.sh_degree);
    std::string header = "ply\nformat binary_little_endian 1.0\n";
    for (const auto &layer : scene.layers) {
        header += fmt::format("comment {} {} {} {}\n", kLayerComment, layer.index, layer.zoom_level,
                              layer.frozen ? 1 : 0);
    }
    header += fmt::format("element vertex {}\n", scene.primitives.size());
    for (const char *name : {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"}) {
        header += fmt::format("property float {}\n", name);
    }
    for (int k = 0; k < 3 * (ncoef - 1); ++k) {
        header += fmt::format("property float f_rest_{}\n", k);
    }
    header += "property float opacity\n";
    for (const char *name : {"scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"}) {
        header += fmt::format("property float {}\n", name);
    }
    header += "property int lod_layer\nproperty float psi_ref\nend_header\n";

    std::vector<std::uint8_t> out;
    const std::size_t record = 4 * (17 + 3 * static_cast<std::size_t>(ncoef - 1) + 2);
    out.reserve(header.size() + record * scene.primitives.size());
    append(out, header);
    for (const auto &p : scene.primitives) {
        for (int k = 0; k < 3; ++k) {
            put_f32(out, p.center[k]);
        }
        for (int k = 0; k < 3; ++k) {
            put_f32(out, 0.0);
        }
        for (int c = 0; c < 3; ++c) {
            put_f32(out, p.sh_coeffs[0][c]);
        }
        for (int c = 0; c < 3; ++c) {
            for (int k = 1; k < ncoef; ++k) {
                put_f32(out, p.sh_coeffs[k][c]);
            }
        }
        put_f32(out, p.opacity_logit);
        for (int k = 0; k < 3; ++k) {
            put_f32(out, p.log_scale[k]);
        }
        for (int k = 0; k < 4; ++k) {
            put_f32(out, p.rotation[k]);
        }
        put_i32(out, p.lod_layer);
        put_f32(out, p.psi_ref);
    }
    return out;
}

Scene decode_scene(std::span<const std::uint8_t> bytes) {
    const VertexTable t = parse_ply(bytes);
    auto require = [&](const std::string &name) {
        const auto c = t.column(name);
        if (!c) {
            throw LoadError(fmt::format("PLY is missing required property '{}'", name));
        }
        return *c;
    };
    const std::size_t cx = require("x"), cy = require("y"), cz = require("z");
    std::array<std::size_t, 3> dc{require("f_dc_0"), require("f_dc_1"), require("f_dc_2")};
    std::vector<std::size_t> rest;
    while (auto c = t.column(fmt::format("f_rest_{}", rest.size()))) {
        rest.push_back(*c);
    }
    int degree = -1;
    for (int d = 0; d <= kMaxShDegree; ++d) {
        if (static_cast<std::size_t>(3 * (sh_coeff_count(d) - 1)) == rest.size()) {
            degree = d;
        }
    }
    if (degree < 0) {
        throw LoadError(fmt::format("{} f_rest properties do not match any SH degree", rest.size()));
    }
    const int ncoef = sh_coeff_count(degree);
    const std::size_t opacity = require("opacity");
    std::array<std::size_t, 3> sc{require("scale_0"), require("scale_1"), require("scale_2")};
    std::array<std::size_t, 4> rot{require("rot_0"), require("rot_1"), require("rot_2"), require("rot_3")};
    const auto lod_col = t.column("lod_layer");
    const auto psi_col = t.column("psi_ref");
    if (!lod_col || !psi_col) {
        spdlog::warn("scene file lacks LoD extension properties; using lod_layer = 0, psi_ref = 1.0");
    }

    Scene scene;
    scene.sh_degree = degree;
    scene.primitives.resize(t.count);
    std::int32_t max_layer = -1;
    for (std::size_t i = 0; i < t.count; ++i) {
        auto &p = scene.primitives[i];
        p.center = Vec3(t.at(i, cx), t.at(i, cy), t.at(i, cz));
        p.sh_coeffs.assign(ncoef, Vec3::Zero());
        for (int c = 0; c < 3; ++c) {
            p.sh_coeffs[0][c] = t.at(i, dc[c]);
            for (int k = 1; k < ncoef; ++k) {
                p.sh_coeffs[k][c] = t.at(i, rest[c * (ncoef - 1) + (k - 1)]);
            }
        }
        p.opacity_logit = t.at(i, opacity);
        p.log_scale = Vec3(t.at(i, sc[0]), t.at(i, sc[1]), t.at(i, sc[2]));
        p.rotation = Vec4(t.at(i, rot[0]), t.at(i, rot[1]), t.at(i, rot[2]), t.at(i, rot[3]));
        p.lod_layer = lod_col ? static_cast<std::int32_t>(t.at(i, *lod_col)) : 0;
        p.psi_ref = psi_col ? t.at(i, *psi_col) : 1.0;

        bool finite = p.center.allFinite() && p.log_scale.allFinite() && p.rotation.allFinite() &&
                      std::isfinite(p.opacity_logit) && std::isfinite(p.psi_ref);
        for (const auto &c : p.sh_coeffs) {
            finite = finite && c.allFinite();
        }
        if (!finite) {
            throw LoadError(fmt::format("primitive {} has non-finite parameters", i), i);
        }
        if (!(p.rotation.norm() > 0.0)) {
            throw LoadError(fmt::format("primitive {} has a zero quaternion", i), i);
        }
        if (!(p.psi_ref > 0.0)) {
            throw LoadError(fmt::format("primitive {} has non-positive psi_ref", i), i);
        }
        if (p.lod_layer < kUnassignedLayer) {
            throw LoadError(fmt::format("primitive {} has invalid lod_layer {}", i, p.lod_layer), i);
        }
        max_layer = std::max(max_layer, p.lod_layer);
    }

    for (const auto &comment : t.comments) {
        std::istringstream in(comment);
        std::string tag;
        LodLayer layer;
        int frozen = 0;
        if (in >> tag && tag == kLayerComment && in >> layer.index >> layer.zoom_level >> frozen) {
            layer.frozen = frozen != 0;
            if (layer.index != scene.layers.size()) {
                throw LoadError(fmt::format("layer comments out of order at layer {}", layer.index));
            }
            scene.layers.push_back(std::move(layer));
        }
    }
    if (scene.layers.empty() && max_layer >= 0) {
        for (std::int32_t k = 0; k <= max_layer; ++k) {
            scene.layers.push_back({static_cast<std::uint32_t>(k), k, k < max_layer, {}});
        }
    }
    for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
        const auto layer = scene.primitives[i].lod_layer;
        if (layer == kUnassignedLayer) {
            continue;
        }
        if (static_cast<std::size_t>(layer) >= scene.layers.size()) {
            throw LoadError(fmt::format("primitive {} references missing layer {}", i, layer), i);
        }
        scene.layers[layer].primitive_ids.push_back(static_cast<PrimitiveId>(i));
    }
    try {
        scene.validate();
    } catch (const InvariantViolation &e) {
        throw LoadError(fmt::format("scene invariants violated: {}", e.what()));
    }
    return scene;
}

void write_scene(const fs::path &path, const Scene &scene) {
    atomic_write(path, encode_scene(scene));
}

Scene read_scene(const fs::path &path) {
    try {
        return decode_scene(read_bytes(path));
    } catch (const LoadError &e) {
        throw LoadError(fmt::format("{}: {}", path.string(), e.what()), e.index());
    }
}

std::vector<SparsePoint> read_points(const fs::path &path) {
    const VertexTable t = parse_ply(read_bytes(path));
    const auto cx = t.column("x"), cy = t.column("y"), cz = t.column("z");
    if (!cx || !cy || !cz) {
        throw LoadError(fmt::format("{}: point file needs x, y, z", path.string()));
    }
    const auto r = t.column("red"), g = t.column("green"), b = t.column("blue");
    const bool has_color = r && g && b;
    const double color_scale = has_color && t.properties[*r].type == PlyType::u8 ? 1.0 / 255.0 : 1.0;
    std::vector<SparsePoint> points(t.count);
    for (std::size_t i = 0; i < t.count; ++i) {
        points[i].position = Vec3(t.at(i, *cx), t.at(i, *cy), t.at(i, *cz));
        if (!points[i].position.allFinite()) {
            throw LoadError(fmt::format("{}: point {} is not finite", path.string(), i), i);
        }
        if (has_color) {
            points[i].color = color_scale * Vec3(t.at(i, *r), t.at(i, *g), t.at(i, *b));
        }
    }
    return points;
}

void write_points(const fs::path &path, std::span<const SparsePoint> points) {
    const bool has_color = !points.empty() &&
                           std::all_of(points.begin(), points.end(),
                                       [](const SparsePoint &p) { return p.color.has_value(); });
    std::string header = fmt::format("ply\nformat binary_little_endian 1.0\nelement vertex {}\n"
                                     "property float x\nproperty float y\nproperty float z\n",
                                     points.size());
    if (has_color) {
        header += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    }
    header += "end_header\n";
    std::vector<std::uint8_t> out;
    append(out, header);
    for (const auto &p : points) {
        for (int k = 0; k < 3; ++k) {
            put_f32(out, p.position[k]);
        }
        if (has_color) {
            for (int k = 0; k < 3; ++k) {
                out.push_back(static_cast<std::uint8_t>(
                    std::floor(std::clamp((*p.color)[k], 0.0, 1.0) * 255.0 + 0.5)));
            }
        }
    }
    atomic_write(path, out);
}

} // namespace zoomsplat
