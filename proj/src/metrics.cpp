// Copyright Contributors to the ZoomSplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "zoomsplat/metrics.hpp"

#include "zoomsplat/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace zoomsplat {

namespace {

void check_pair(const ImageBuffer &a, const ImageBuffer &b) {
    if (!a.same_shape(b) || a.empty()) {
        throw InvalidParameter("metric inputs must have identical non-empty dimensions");
    }
}

std::array<double, kSsimWindow> ssim_window() {
    std::array<double, kSsimWindow> g{};
    double sum = 0.0;
    const int half = kSsimWindow / 2;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - half;
        g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        sum += g[static_cast<std::size_t>(i)];
    }
    for (double &v : g) {
        v /= sum;
    }
    return g;
}

/// Valid-mode separable filtering of one channel plane (w x h) into
/// (w - 10) x (h - 10).
std::vector<double> filter_valid(const std::vector<double> &plane, int w, int h,
                                 const std::array<double, kSsimWindow> &g) {
    const int ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
    std::vector<double> tmp(static_cast<std::size_t>(ow) * static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kSsimWindow; ++k) {
                acc += g[static_cast<std::size_t>(k)] * plane[static_cast<std::size_t>(y * w + x + k)];
            }
            tmp[static_cast<std::size_t>(y * ow + x)] = acc;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(ow) * static_cast<std::size_t>(oh));
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kSsimWindow; ++k) {
                acc += g[static_cast<std::size_t>(k)] * tmp[static_cast<std::size_t>((y + k) * ow + x)];
            }
            out[static_cast<std::size_t>(y * ow + x)] = acc;
        }
    }
    return out;
}

/// Transpose of filter_valid: scatter an (w - 10) x (h - 10) map back to w x h.
std::vector<double> filter_valid_transpose(const std::vector<double> &map, int w, int h,
                                           const std::array<double, kSsimWindow> &g) {
    const int ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
    std::vector<double> tmp(static_cast<std::size_t>(ow) * static_cast<std::size_t>(h), 0.0);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            const double v = map[static_cast<std::size_t>(y * ow + x)];
            for (int k = 0; k < kSsimWindow; ++k) {
                tmp[static_cast<std::size_t>((y + k) * ow + x)] += g[static_cast<std::size_t>(k)] * v;
            }
        }
    }
    std::vector<double> out(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < ow; ++x) {
            const double v = tmp[static_cast<std::size_t>(y * ow + x)];
            for (int k = 0; k < kSsimWindow; ++k) {
                out[static_cast<std::size_t>(y * w + x + k)] += g[static_cast<std::size_t>(k)] * v;
            }
        }
    }
    return out;
}

std::vector<double> extract_plane(const ImageBuffer &img, int c) {
    std::vector<double> p(img.pixel_count());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            p[static_cast<std::size_t>(y * img.width() + x)] = img.at(x, y, c);
        }
    }
    return p;
}

SsimWithGradient ssim_impl(const ImageBuffer &a, const ImageBuffer &b, bool want_grad) {
    check_pair(a, b);
    if (a.width() < kSsimWindow || a.height() < kSsimWindow) {
        throw InvalidParameter("SSIM needs images of at least 11x11 pixels");
    }
    const auto g = ssim_window();
    const int w = a.width(), h = a.height();
    const int ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
    const double n_total = static_cast<double>(ow) * oh * a.channels();

    SsimWithGradient out;
    if (want_grad) {
        out.grad_a = ImageBuffer(w, h, a.channels());
    }
    double total = 0.0;
    for (int c = 0; c < a.channels(); ++c) {
        const auto pa = extract_plane(a, c);
        const auto pb = extract_plane(b, c);
        std::vector<double> aa(pa.size()), bb(pa.size()), ab(pa.size());
        for (std::size_t i = 0; i < pa.size(); ++i) {
            aa[i] = pa[i] * pa[i];
            bb[i] = pb[i] * pb[i];
            ab[i] = pa[i] * pb[i];
        }
        const auto mu_a = filter_valid(pa, w, h, g);
        const auto mu_b = filter_valid(pb, w, h, g);
        const auto e_aa = filter_valid(aa, w, h, g);
        const auto e_bb = filter_valid(bb, w, h, g);
        const auto e_ab = filter_valid(ab, w, h, g);

        std::vector<double> d_mu, d_eaa, d_eab;
        if (want_grad) {
            d_mu.resize(mu_a.size());
            d_eaa.resize(mu_a.size());
            d_eab.resize(mu_a.size());
        }
        for (std::size_t i = 0; i < mu_a.size(); ++i) {
            const double ma = mu_a[i], mb = mu_b[i];
            const double var_a = e_aa[i] - ma * ma;
            const double var_b = e_bb[i] - mb * mb;
            const double cov = e_ab[i] - ma * mb;
            const double num1 = 2.0 * ma * mb + kSsimC1;
            const double num2 = 2.0 * cov + kSsimC2;
            const double den1 = ma * ma + mb * mb + kSsimC1;
            const double den2 = var_a + var_b + kSsimC2;
            const double s = (num1 * num2) / (den1 * den2);
            total += s;
            if (want_grad) {
                d_eab[i] = 2.0 * num1 / (den1 * den2) / n_total;
                d_eaa[i] = -s / den2 / n_total;
                d_mu[i] = ((2.0 * mb * num2 - 2.0 * mb * num1) / (den1 * den2) -
                           s * 2.0 * ma / den1 + s * 2.0 * ma / den2) /
                          n_total;
            }
        }
        if (want_grad) {
            const auto t_mu = filter_valid_transpose(d_mu, w, h, g);
            const auto t_eaa = filter_valid_transpose(d_eaa, w, h, g);
            const auto t_eab = filter_valid_transpose(d_eab, w, h, g);
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    const auto i = static_cast<std::size_t>(y * w + x);
                    out.grad_a.at(x, y, c) = t_mu[i] + 2.0 * pa[i] * t_eaa[i] + pb[i] * t_eab[i];
                }
            }
        }
    }
    out.value = total / n_total;
    return out;
}

} // namespace

double psnr(const ImageBuffer &a, const ImageBuffer &b) {
    check_pair(a, b);
    double se = 0.0;
    const auto da = a.data(), db = b.data();
    for (std::size_t i = 0; i < da.size(); ++i) {
        const double d = da[i] - db[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(da.size());
    if (mse == 0.0) {
        return kPsnrCap;
    }
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const ImageBuffer &a, const ImageBuffer &b) { return ssim_impl(a, b, false).value; }

SsimWithGradient ssim_with_gradient(const ImageBuffer &a, const ImageBuffer &b) {
    return ssim_impl(a, b, true);
}

} // namespace zoomsplat
