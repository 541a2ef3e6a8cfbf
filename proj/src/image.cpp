// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "zoomsplat/image.hpp"

#include "zoomsplat/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace zoomsplat {

namespace {

void check_dims(int width, int height, int channels) {
    if (width <= 0 || height <= 0 || channels <= 0) {
        throw InvalidParameter("image dimensions must be positive, got " + std::to_string(width) +
                               "x" + std::to_string(height) + "x" + std::to_string(channels));
    }
}

} // namespace

ImageBuffer::ImageBuffer(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
    check_dims(width, height, channels);
    data_.assign(pixel_count() * static_cast<std::size_t>(channels), fill);
}

ImageBuffer::ImageBuffer(int width, int height, int channels, std::vector<double> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    check_dims(width, height, channels);
    if (data_.size() != pixel_count() * static_cast<std::size_t>(channels)) {
        throw InvalidParameter("image data length does not match its dimensions");
    }
}

bool ImageBuffer::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

DepthMap::DepthMap(int width, int height, double fill) : width_(width), height_(height) {
    check_dims(width, height, 1);
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
}

DepthMap::DepthMap(int width, int height, std::vector<double> data)
    : width_(width), height_(height), data_(std::move(data)) {
    check_dims(width, height, 1);
    if (data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw InvalidParameter("depth data length does not match its dimensions");
    }
}

void DepthMap::validate() const {
    for (double v : data_) {
        if (!std::isfinite(v) || v < 0.0) {
            throw InvalidParameter("depth values must be finite and non-negative");
        }
    }
}

} // namespace zoomsplat
