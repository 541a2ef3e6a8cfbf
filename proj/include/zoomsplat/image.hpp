// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace zoomsplat {

/// Row-major raster, interleaved channels. Color values are nominally in [0,1].
class ImageBuffer {
  public:
    ImageBuffer() = default;
    ImageBuffer(int width, int height, int channels, double fill = 0.0);
    ImageBuffer(int width, int height, int channels, std::vector<double> data);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channels() const noexcept { return channels_; }
    std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
    }
    bool empty() const noexcept { return data_.empty(); }

    double &at(int x, int y, int c = 0) noexcept { return data_[index(x, y, c)]; }
    double at(int x, int y, int c = 0) const noexcept { return data_[index(x, y, c)]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    bool same_shape(const ImageBuffer &other) const noexcept {
        return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
    }
    bool all_finite() const noexcept;

    friend bool operator==(const ImageBuffer &, const ImageBuffer &) = default;

  private:
    std::size_t index(int x, int y, int c) const noexcept {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
                static_cast<std::size_t>(x)) *
                   static_cast<std::size_t>(channels_) +
               static_cast<std::size_t>(c);
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

/// Camera-space depth per pixel in world units; 0 marks an empty pixel.
class DepthMap {
  public:
    DepthMap() = default;
    DepthMap(int width, int height, double fill = 0.0);
    DepthMap(int width, int height, std::vector<double> data);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }

    double &at(int x, int y) noexcept { return data_[idx(x, y)]; }
    double at(int x, int y) const noexcept { return data_[idx(x, y)]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    /// Throws InvalidParameter on negative or non-finite entries.
    void validate() const;

    friend bool operator==(const DepthMap &, const DepthMap &) = default;

  private:
    std::size_t idx(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<double> data_;
};

} // namespace zoomsplat
