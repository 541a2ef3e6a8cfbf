// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "zoomsplat/io.hpp"

#include "zoomsplat/error.hpp"

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <set>
#include <sstream>

namespace zoomsplat {

using nlohmann::json;

namespace {

const std::set<std::string> kCameraKeys{"id", "width", "height", "fx", "fy", "cx",
                                        "cy", "rotation", "translation", "near", "far"};

double number(const json &obj, const char *key, std::size_t index) {
    if (!obj.contains(key) || !obj[key].is_number()) {
        throw LoadError(fmt::format("camera {}: '{}' missing or not a number", index, key), index);
    }
    return obj[key].get<double>();
}

} // namespace

std::string encode_cameras(std::span<const Camera> cameras) {
    json doc = json::array();
    for (std::size_t i = 0; i < cameras.size(); ++i) {
        const Camera &c = cameras[i];
        json rotation = json::array();
        for (int r = 0; r < 3; ++r) {
            for (int k = 0; k < 3; ++k) {
                rotation.push_back(c.rotation_wc(r, k));
            }
        }
        doc.push_back({{"id", i},
                       {"width", c.width},
                       {"height", c.height},
                       {"fx", c.fx},
                       {"fy", c.fy},
                       {"cx", c.cx},
                       {"cy", c.cy},
                       {"rotation", rotation},
                       {"translation", {c.translation_wc.x(), c.translation_wc.y(), c.translation_wc.z()}},
                       {"near", c.near},
                       {"far", c.far}});
    }
    return doc.dump(2) + "\n";
}

std::vector<Camera> decode_cameras(const std::string &text) {
    const json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_array()) {
        throw LoadError("camera file must be a JSON array");
    }
    std::vector<Camera> cameras;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const json &obj = doc[i];
        if (!obj.is_object()) {
            throw LoadError(fmt::format("camera {} is not an object", i), i);
        }
        for (const auto &[key, value] : obj.items()) {
            if (!kCameraKeys.contains(key)) {
                spdlog::warn("camera {}: ignoring unknown key '{}'", i, key);
            }
        }
        Camera c;
        c.width = static_cast<int>(number(obj, "width", i));
        c.height = static_cast<int>(number(obj, "height", i));
        c.fx = number(obj, "fx", i);
        c.fy = number(obj, "fy", i);
        c.cx = number(obj, "cx", i);
        c.cy = number(obj, "cy", i);
        const auto &rot = obj.value("rotation", json());
        const auto &trans = obj.value("translation", json());
        if (!rot.is_array() || rot.size() != 9 || !trans.is_array() || trans.size() != 3) {
            throw LoadError(fmt::format("camera {}: rotation needs 9 numbers, translation 3", i), i);
        }
        try {
            for (int r = 0; r < 3; ++r) {
                for (int k = 0; k < 3; ++k) {
                    c.rotation_wc(r, k) = rot[3 * r + k].get<double>();
                }
                c.translation_wc[r] = trans[r].get<double>();
            }
        } catch (const json::exception &) {
            throw LoadError(fmt::format("camera {}: pose entries must be numbers", i), i);
        }
        if (obj.contains("near")) {
            c.near = number(obj, "near", i);
        } else {
            spdlog::warn("camera {}: missing 'near', using {}", i, c.near);
        }
        if (obj.contains("far")) {
            c.far = number(obj, "far", i);
        } else {
            spdlog::warn("camera {}: missing 'far', using {}", i, c.far);
        }
        try {
            c.validate(1e-6);
        } catch (const InvalidParameter &e) {
            throw LoadError(fmt::format("camera {}: {}", i, e.what()), i);
        }
        cameras.push_back(c);
    }
    return cameras;
}

void write_cameras(const fs::path &path, std::span<const Camera> cameras) {
    atomic_write(path, encode_cameras(cameras));
}

std::vector<Camera> read_cameras(const fs::path &path) {
    const auto bytes = read_bytes(path);
    try {
        return decode_cameras(std::string(bytes.begin(), bytes.end()));
    } catch (const LoadError &e) {
        throw LoadError(fmt::format("{}: {}", path.string(), e.what()), e.index());
    }
}

// ---------------------------------------------------------------------------

namespace {

std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace

ConfigMap parse_config(const std::string &text) {
    ConfigMap out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw LoadError(fmt::format("config line {}: expected 'key = value'", lineno));
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) {
            throw LoadError(fmt::format("config line {}: empty key", lineno));
        }
        out[key] = trim(line.substr(eq + 1));
    }
    return out;
}

std::string emit_config(const ConfigMap &config) {
    std::string out;
    for (const auto &[key, value] : config) {
        if (key.find_first_of("=#\n") != std::string::npos || value.find_first_of("#\n") != std::string::npos) {
            throw InvalidParameter(fmt::format("config entry '{}' cannot be represented", key));
        }
        out += fmt::format("{} = {}\n", key, value);
    }
    return out;
}

ConfigMap read_config(const fs::path &path) {
    const auto bytes = read_bytes(path);
    return parse_config(std::string(bytes.begin(), bytes.end()));
}

} // namespace zoomsplat
