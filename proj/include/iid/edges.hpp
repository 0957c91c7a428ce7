#pragma once

#include "iid/core.hpp"
#include "iid/image.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace iid {

// Single-channel edge map in [0,1]; full-resolution maps are binary,
// downsampled ones fractional.
using EdgeMap = Image;

namespace detail {

inline Image gaussian_blur(const Image& img, double sigma) {
    if (sigma <= 0.0) return img;
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    double norm = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        norm += kernel[i + radius];
    }
    for (double& k : kernel) k /= norm;

    const int h = img.height, w = img.width;
    auto clampi = [](int v, int n) { return std::clamp(v, 0, n - 1); };
    Image tmp(h, w, 1), out(h, w, 1);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] * img.at(r, clampi(c + i, w));
            tmp.at(r, c) = acc;
        }
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] * tmp.at(clampi(r + i, h), c);
            out.at(r, c) = acc;
        }
    return out;
}

} // namespace detail

// Classic Canny pipeline: Gaussian blur, central-difference gradients,
// non-maximum suppression over 8 quantized directions, double-threshold
// hysteresis. Thresholds are relative to the per-image maximum gradient
// magnitude, making the detector contrast-invariant.
inline EdgeMap canny(const Image& img, double sigma = 1.0, double low = 0.1, double high = 0.2) {
    if (!(low > 0.0 && low < high && high <= 1.0))
        throw ConfigError("canny: require 0 < low < high <= 1");

    const Image gray = luminance(img);
    const Image blurred = detail::gaussian_blur(gray, sigma);
    const int h = img.height, w = img.width;

    std::vector<double> mag(static_cast<std::size_t>(h) * w, 0.0);
    std::vector<double> gx(mag.size(), 0.0), gy(mag.size(), 0.0);
    auto clampi = [](int v, int n) { return std::clamp(v, 0, n - 1); };
    double max_mag = 0.0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double dx = (blurred.at(r, clampi(c + 1, w)) - blurred.at(r, clampi(c - 1, w))) * 0.5;
            const double dy = (blurred.at(clampi(r + 1, h), c) - blurred.at(clampi(r - 1, h), c)) * 0.5;
            const std::size_t p = static_cast<std::size_t>(r) * w + c;
            gx[p] = dx;
            gy[p] = dy;
            mag[p] = std::hypot(dx, dy);
            max_mag = std::max(max_mag, mag[p]);
        }
    EdgeMap out(h, w, 1, 0.0);
    if (max_mag <= 0.0) return out;

    // Non-maximum suppression. The comparison is strict in the gradient
    // direction and non-strict against it so a symmetric two-pixel ridge
    // keeps exactly one pixel.
    std::vector<char> keep(mag.size(), 0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const std::size_t p = static_cast<std::size_t>(r) * w + c;
            if (mag[p] <= 0.0) continue;
            const double angle = std::atan2(gy[p], gx[p]);
            // Quantize to one of 8 directions (4 orientations).
            const int oct = static_cast<int>(std::lround(angle / (3.14159265358979323846 / 4.0))) & 3;
            static constexpr int kStep[4][2] = {{0, 1}, {1, 1}, {1, 0}, {1, -1}}; // (dr, dc)
            const int dr = kStep[oct][0], dc = kStep[oct][1];
            const int rf = r + dr, cf = c + dc, rb = r - dr, cb = c - dc;
            const double fwd = (rf >= 0 && rf < h && cf >= 0 && cf < w)
                                   ? mag[static_cast<std::size_t>(rf) * w + cf] : 0.0;
            const double bwd = (rb >= 0 && rb < h && cb >= 0 && cb < w)
                                   ? mag[static_cast<std::size_t>(rb) * w + cb] : 0.0;
            if (mag[p] > fwd && mag[p] >= bwd) keep[p] = 1;
        }

    // Double-threshold hysteresis: strong pixels seed a flood fill through
    // weak pixels, 8-connected.
    const double t_high = high * max_mag;
    const double t_low = low * max_mag;
    std::vector<char> state(mag.size(), 0); // 0 none, 1 weak, 2 strong
    std::vector<std::size_t> stack;
    for (std::size_t p = 0; p < mag.size(); ++p) {
        if (!keep[p] || mag[p] < t_low) continue;
        if (mag[p] >= t_high) {
            state[p] = 2;
            stack.push_back(p);
        } else {
            state[p] = 1;
        }
    }
    while (!stack.empty()) {
        const std::size_t p = stack.back();
        stack.pop_back();
        const int r = static_cast<int>(p / w), c = static_cast<int>(p % w);
        for (int dr = -1; dr <= 1; ++dr)
            for (int dc = -1; dc <= 1; ++dc) {
                const int rr = r + dr, cc = c + dc;
                if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
                const std::size_t q = static_cast<std::size_t>(rr) * w + cc;
                if (state[q] == 1) {
                    state[q] = 2;
                    stack.push_back(q);
                }
            }
    }
    for (std::size_t p = 0; p < mag.size(); ++p)
        if (state[p] == 2) out.data[p] = 1.0;
    return out;
}

// Two rules for deriving shading-edge ground truth when only the intrinsic
// components are available:
//   ShadingMinusReflectance (default): canny(S) - canny(luma R), clamped at 0.
//   ImageMinusReflectance: canny(luma I) - canny(luma R), clamped at 0.
enum class ShadingEdgeRule { ShadingMinusReflectance, ImageMinusReflectance };

inline std::pair<EdgeMap, EdgeMap> derive_gt_edges(
    const IntrinsicTriple& triple,
    ShadingEdgeRule rule = ShadingEdgeRule::ShadingMinusReflectance,
    double sigma = 1.0, double low = 0.1, double high = 0.2) {
    EdgeMap reflectance_edges = canny(luminance(triple.reflectance), sigma, low, high);
    const Image& shade_src = rule == ShadingEdgeRule::ShadingMinusReflectance
                                 ? triple.shading
                                 : luminance(triple.image);
    EdgeMap shading_edges = canny(shade_src, sigma, low, high);
    for (std::size_t i = 0; i < shading_edges.data.size(); ++i)
        shading_edges.data[i] = std::clamp(shading_edges.data[i] - reflectance_edges.data[i], 0.0, 1.0);
    return {std::move(reflectance_edges), std::move(shading_edges)};
}

// Half- and quarter-scale supervision targets: average-pooled from the
// full-resolution map so they stay consistent with feature-space side
// outputs rather than re-detecting on a resized image.
inline std::pair<EdgeMap, EdgeMap> edge_pyramid(const EdgeMap& edges) {
    if (edges.height % 4 != 0 || edges.width % 4 != 0)
        throw ShapeError("edge_pyramid: size must be divisible by 4");
    return {avg_downsample(edges, 2), avg_downsample(edges, 4)};
}

} // namespace iid
