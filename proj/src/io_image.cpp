// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "zoomsplat/io.hpp"

#include "zoomsplat/error.hpp"

#include <fmt/format.h>
#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unistd.h>

namespace zoomsplat {

void atomic_write(const fs::path &path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    fs::path tmp = path;
    tmp += fmt::format(".tmp.{}", ::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(fmt::format("cannot open {} for writing", tmp.string()));
        }
        out.write(reinterpret_cast<const char *>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            out.close();
            fs::remove(tmp);
            throw Error(fmt::format("short write to {}", tmp.string()));
        }
    }
    fs::rename(tmp, path);
}

void atomic_write(const fs::path &path, const std::string &text) {
    atomic_write(path, std::span(reinterpret_cast<const std::uint8_t *>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_bytes(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw LoadError(fmt::format("cannot open {}", path.string()));
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------
// PNG

namespace {

struct PngReadCursor {
    std::span<const std::uint8_t> bytes;
    std::size_t offset = 0;
};

[[noreturn]] void png_error_cb(png_structp png, png_const_charp msg) {
    auto *what = static_cast<std::string *>(png_get_error_ptr(png));
    *what = msg;
    png_longjmp(png, 1);
}

void png_warning_cb(png_structp, png_const_charp) {}

void png_write_cb(png_structp png, png_bytep data, png_size_t length) {
    auto *out = static_cast<std::vector<std::uint8_t> *>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + length);
}

void png_read_cb(png_structp png, png_bytep data, png_size_t length) {
    auto *cur = static_cast<PngReadCursor *>(png_get_io_ptr(png));
    if (cur->offset + length > cur->bytes.size()) {
        png_error(png, "truncated PNG stream");
    }
    std::memcpy(data, cur->bytes.data() + cur->offset, length);
    cur->offset += length;
}

int color_type_for(int channels) {
    switch (channels) {
    case 1: return PNG_COLOR_TYPE_GRAY;
    case 2: return PNG_COLOR_TYPE_GRAY_ALPHA;
    case 3: return PNG_COLOR_TYPE_RGB;
    case 4: return PNG_COLOR_TYPE_RGBA;
    default: throw InvalidParameter(fmt::format("cannot store {} channels as PNG", channels));
    }
}

} // namespace

std::vector<std::uint8_t> encode_png(const ImageBuffer &image, int bit_depth) {
    if (bit_depth != 8 && bit_depth != 16) {
        throw InvalidParameter("PNG bit depth must be 8 or 16");
    }
    if (image.empty()) {
        throw InvalidParameter("cannot encode an empty image");
    }
    const int color_type = color_type_for(image.channels());
    const double max_value = bit_depth == 8 ? 255.0 : 65535.0;
    const std::size_t bytes_per_sample = bit_depth / 8;
    const std::size_t row_bytes = static_cast<std::size_t>(image.width()) * image.channels() * bytes_per_sample;
    std::vector<std::uint8_t> pixels(row_bytes * image.height());
    auto src = image.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
        const double v = std::isfinite(src[i]) ? std::clamp(src[i], 0.0, 1.0) : 0.0;
        const auto q = static_cast<std::uint32_t>(std::floor(v * max_value + 0.5));
        if (bit_depth == 8) {
            pixels[i] = static_cast<std::uint8_t>(q);
        } else {
            pixels[2 * i] = static_cast<std::uint8_t>(q >> 8);
            pixels[2 * i + 1] = static_cast<std::uint8_t>(q & 0xFF);
        }
    }

    std::vector<std::uint8_t> out;
    std::string what;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &what, png_error_cb, png_warning_cb);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw Error("libpng initialisation failed");
    }
    std::vector<png_bytep> rows(image.height());
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(fmt::format("PNG encode failed: {}", what));
    }
    png_set_write_fn(png, &out, png_write_cb, nullptr);
    png_set_IHDR(png, info, image.width(), image.height(), bit_depth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < image.height(); ++y) {
        rows[y] = pixels.data() + row_bytes * y;
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

ImageBuffer decode_png(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
        throw LoadError("not a PNG stream");
    }
    std::string what;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &what, png_error_cb, png_warning_cb);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw Error("libpng initialisation failed");
    }
    PngReadCursor cursor{bytes, 0};
    std::vector<std::uint8_t> pixels;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw LoadError(fmt::format("PNG decode failed: {}", what));
    }
    png_set_read_fn(png, &cursor, png_read_cb);
    png_read_info(png, info);
    png_set_expand(png); // palette and low-bit gray to 8-bit, tRNS to alpha
    png_read_update_info(png, info);
    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int bit_depth = png_get_bit_depth(png, info);
    const int channels = png_get_channels(png, info);
    const std::size_t row_bytes = png_get_rowbytes(png, info);
    pixels.resize(row_bytes * height);
    rows.resize(height);
    for (int y = 0; y < height; ++y) {
        rows[y] = pixels.data() + row_bytes * y;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    // Gray+alpha keeps only gray, RGBA keeps RGBA.
    const int keep = channels == 2 ? 1 : channels;
    ImageBuffer image(width, height, keep);
    const double max_value = bit_depth == 16 ? 65535.0 : 255.0;
    for (int y = 0; y < height; ++y) {
        const std::uint8_t *row = rows[y];
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < keep; ++c) {
                const std::size_t s = static_cast<std::size_t>(x) * channels + c;
                const double q = bit_depth == 16 ? (row[2 * s] << 8 | row[2 * s + 1]) : row[s];
                image.at(x, y, c) = q / max_value;
            }
        }
    }
    return image;
}

void write_png(const fs::path &path, const ImageBuffer &image) {
    atomic_write(path, encode_png(image, 8));
}

ImageBuffer read_png(const fs::path &path) {
    try {
        return decode_png(read_bytes(path));
    } catch (const LoadError &e) {
        throw LoadError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

// ---------------------------------------------------------------------------
// PFM

void write_depth(const fs::path &path, const DepthMap &depth) {
    std::string out = fmt::format("Pf\n{} {}\n-1.0\n", depth.width(), depth.height());
    const std::size_t header = out.size();
    out.resize(header + 4 * static_cast<std::size_t>(depth.width()) * depth.height());
    char *dst = out.data() + header;
    for (int y = depth.height() - 1; y >= 0; --y) {
        for (int x = 0; x < depth.width(); ++x) {
            const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(depth.at(x, y)));
            for (int b = 0; b < 4; ++b) {
                *dst++ = static_cast<char>((bits >> (8 * b)) & 0xFF);
            }
        }
    }
    atomic_write(path, out);
}

DepthMap read_depth(const fs::path &path) {
    const auto bytes = read_bytes(path);
    std::string head(bytes.begin(), bytes.begin() + std::min<std::size_t>(bytes.size(), 128));
    std::istringstream in(head);
    std::string magic;
    int w = 0, h = 0;
    double scale = 0.0;
    in >> magic >> w >> h >> scale;
    if (!in || magic != "Pf" || w <= 0 || h <= 0 || scale == 0.0) {
        throw LoadError(fmt::format("{}: not a single-channel PFM", path.string()));
    }
    const std::size_t offset = static_cast<std::size_t>(in.tellg()) + 1;
    const std::size_t need = 4 * static_cast<std::size_t>(w) * h;
    if (bytes.size() < offset + need) {
        throw LoadError(fmt::format("{}: truncated PFM payload", path.string()));
    }
    const bool little = scale < 0.0;
    DepthMap depth(w, h);
    const std::uint8_t *src = bytes.data() + offset;
    for (int y = h - 1; y >= 0; --y) {
        for (int x = 0; x < w; ++x) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) {
                const int shift = little ? 8 * b : 8 * (3 - b);
                bits |= static_cast<std::uint32_t>(*src++) << shift;
            }
            depth.at(x, y) = std::bit_cast<float>(bits);
        }
    }
    return depth;
}

} // namespace zoomsplat
