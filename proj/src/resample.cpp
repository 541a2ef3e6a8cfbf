// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "zoomsplat/resample.hpp"

#include "zoomsplat/error.hpp"

#include <cmath>
#include <vector>

namespace zoomsplat {

double cubic_kernel(double x) {
    const double a = kCubicA;
    x = std::abs(x);
    if (x <= 1.0) {
        return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    }
    if (x < 2.0) {
        return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    }
    return 0.0;
}

int reflect101(int i, int n) {
    if (n == 1) {
        return 0;
    }
    const int period = 2 * (n - 1);
    i = std::abs(i) % period;
    return i < n ? i : period - i;
}

namespace {

struct Tap {
    int index;
    double weight;
};

/// Sparse 1D resampling operator: out[i] = sum(taps[i]) in[index] * weight.
using Taps = std::vector<std::vector<Tap>>;

Taps upsample_taps(int n_in, int factor) {
    Taps taps(static_cast<std::size_t>(n_in) * static_cast<std::size_t>(factor));
    for (std::size_t j = 0; j < taps.size(); ++j) {
        const double x = (static_cast<double>(j) + 0.5) / factor - 0.5;
        const double x0 = std::floor(x);
        const double t = x - x0;
        for (int m = -1; m <= 2; ++m) {
            const double w = cubic_kernel(t - m);
            if (w != 0.0) {
                taps[j].push_back({reflect101(static_cast<int>(x0) + m, n_in), w});
            }
        }
    }
    return taps;
}

Taps downsample_taps(int n_in, int factor) {
    const int n_out = n_in / factor;
    Taps taps(static_cast<std::size_t>(n_out));
    const double support = 2.0 * factor;
    for (int i = 0; i < n_out; ++i) {
        const double c = (i + 0.5) * factor - 0.5;
        const int lo = static_cast<int>(std::ceil(c - support));
        const int hi = static_cast<int>(std::floor(c + support));
        double sum = 0.0;
        auto &row = taps[static_cast<std::size_t>(i)];
        for (int j = lo; j <= hi; ++j) {
            const double w = cubic_kernel((j - c) / factor);
            if (w != 0.0) {
                row.push_back({reflect101(j, n_in), w});
                sum += w;
            }
        }
        for (auto &tap : row) {
            tap.weight /= sum;
        }
    }
    return taps;
}

Taps gaussian_taps(int n, double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[static_cast<std::size_t>(i + radius)];
    }
    Taps taps(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        for (int i = -radius; i <= radius; ++i) {
            taps[static_cast<std::size_t>(j)].push_back(
                {reflect101(j + i, n), k[static_cast<std::size_t>(i + radius)] / sum});
        }
    }
    return taps;
}

/// Apply `tx` along x and `ty` along y.
ImageBuffer apply_separable(const ImageBuffer &in, const Taps &tx, const Taps &ty) {
    const int w_out = static_cast<int>(tx.size());
    const int h_out = static_cast<int>(ty.size());
    const int ch = in.channels();
    ImageBuffer tmp(w_out, in.height(), ch);
    for (int y = 0; y < in.height(); ++y) {
        for (int x = 0; x < w_out; ++x) {
            for (int c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (const Tap &t : tx[static_cast<std::size_t>(x)]) {
                    acc += t.weight * in.at(t.index, y, c);
                }
                tmp.at(x, y, c) = acc;
            }
        }
    }
    ImageBuffer out(w_out, h_out, ch);
    for (int y = 0; y < h_out; ++y) {
        for (int x = 0; x < w_out; ++x) {
            for (int c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (const Tap &t : ty[static_cast<std::size_t>(y)]) {
                    acc += t.weight * tmp.at(x, t.index, c);
                }
                out.at(x, y, c) = acc;
            }
        }
    }
    return out;
}

/// Transpose of apply_separable; `w_in`/`h_in` are the forward input size.
ImageBuffer apply_separable_transpose(const ImageBuffer &g, const Taps &tx, const Taps &ty, int w_in,
                                      int h_in) {
    const int ch = g.channels();
    ImageBuffer tmp(g.width(), h_in, ch);
    for (int y = 0; y < g.height(); ++y) {
        for (const Tap &t : ty[static_cast<std::size_t>(y)]) {
            for (int x = 0; x < g.width(); ++x) {
                for (int c = 0; c < ch; ++c) {
                    tmp.at(x, t.index, c) += t.weight * g.at(x, y, c);
                }
            }
        }
    }
    ImageBuffer out(w_in, h_in, ch);
    for (int y = 0; y < h_in; ++y) {
        for (int x = 0; x < g.width(); ++x) {
            for (const Tap &t : tx[static_cast<std::size_t>(x)]) {
                for (int c = 0; c < ch; ++c) {
                    out.at(t.index, y, c) += t.weight * tmp.at(x, y, c);
                }
            }
        }
    }
    return out;
}

void check_factor(int factor) {
    if (factor < 1) {
        throw InvalidParameter("resampling factor must be >= 1");
    }
}

} // namespace

ImageBuffer bicubic_upsample(const ImageBuffer &image, int factor) {
    check_factor(factor);
    return apply_separable(image, upsample_taps(image.width(), factor),
                           upsample_taps(image.height(), factor));
}

ImageBuffer bicubic_downsample(const ImageBuffer &image, int factor) {
    check_factor(factor);
    if (image.width() % factor != 0 || image.height() % factor != 0) {
        throw InvalidParameter("image dimensions must be divisible by the downsampling factor");
    }
    return apply_separable(image, downsample_taps(image.width(), factor),
                           downsample_taps(image.height(), factor));
}

ImageBuffer bicubic_downsample_adjoint(const ImageBuffer &grad_low, int factor) {
    check_factor(factor);
    const int w_in = grad_low.width() * factor;
    const int h_in = grad_low.height() * factor;
    return apply_separable_transpose(grad_low, downsample_taps(w_in, factor),
                                     downsample_taps(h_in, factor), w_in, h_in);
}

ImageBuffer gaussian_blur(const ImageBuffer &image, double sigma) {
    if (!(sigma > 0.0)) {
        throw InvalidParameter("blur sigma must be positive");
    }
    return apply_separable(image, gaussian_taps(image.width(), sigma),
                           gaussian_taps(image.height(), sigma));
}

double bicubic_sample(const ImageBuffer &image, double x, double y, int channel) {
    const double x0 = std::floor(x), y0 = std::floor(y);
    const double tx = x - x0, ty = y - y0;
    double acc = 0.0;
    for (int m = -1; m <= 2; ++m) {
        const double wy = cubic_kernel(ty - m);
        if (wy == 0.0) {
            continue;
        }
        const int yy = reflect101(static_cast<int>(y0) + m, image.height());
        for (int n = -1; n <= 2; ++n) {
            const double wx = cubic_kernel(tx - n);
            if (wx == 0.0) {
                continue;
            }
            acc += wy * wx * image.at(reflect101(static_cast<int>(x0) + n, image.width()), yy, channel);
        }
    }
    return acc;
}

} // namespace zoomsplat
