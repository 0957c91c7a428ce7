#pragma once

#include "iid/core.hpp"
#include "iid/image.hpp"

#include <cmath>
#include <cstddef>
#include <vector>

namespace iid {

// Log-domain cross color ratios for the three channel pairs
// (R,G), (R,B), (G,B), each over two neighbor directions.
//
// Channel layout per pixel:
//   0..2 : log M_RG, log M_RB, log M_GB against the right neighbor
//   3..5 : the same three against the down neighbor
//
// The ratio of channel products across a pixel pair cancels any per-pixel
// multiplicative term, so these values depend on reflectance transitions
// only. The last column (resp. row) pairs a pixel with itself and is 0.
struct CcrMap {
    int height = 0;
    int width = 0;
    std::vector<double> data; // h*w*6 row-major

    CcrMap() = default;
    CcrMap(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w * 6, 0.0) {}

    double& at(int r, int c, int ch) {
        return data[(static_cast<std::size_t>(r) * width + c) * 6 + ch];
    }
    double at(int r, int c, int ch) const {
        return data[(static_cast<std::size_t>(r) * width + c) * 6 + ch];
    }
};

inline constexpr double kCcrEpsilon = 1e-4;

inline CcrMap log_ccr_map(const Image& img, double epsilon = kCcrEpsilon) {
    if (img.channels != 3) throw ShapeError("log_ccr_map: input must have 3 channels");
    if (!(epsilon > 0.0)) throw DomainError("log_ccr_map: epsilon must be positive");

    const int h = img.height, w = img.width;
    // Log of the clamped channels, computed once per pixel.
    std::vector<double> lg(static_cast<std::size_t>(h) * w * 3);
    for (std::size_t i = 0; i < lg.size(); ++i)
        lg[i] = std::log(std::max(img.data[i], epsilon));

    static constexpr int kPairs[3][2] = {{0, 1}, {0, 2}, {1, 2}}; // RG, RB, GB

    CcrMap out(h, w);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const std::size_t p1 = (static_cast<std::size_t>(r) * w + c) * 3;
            for (int dir = 0; dir < 2; ++dir) {
                const int r2 = dir == 0 ? r : std::min(r + 1, h - 1);
                const int c2 = dir == 0 ? std::min(c + 1, w - 1) : c;
                const std::size_t p2 = (static_cast<std::size_t>(r2) * w + c2) * 3;
                if (p1 == p2) continue; // self-pair stays 0
                for (int k = 0; k < 3; ++k) {
                    const int a = kPairs[k][0], b = kPairs[k][1];
                    out.at(r, c, 3 * dir + k) = lg[p1 + a] + lg[p2 + b] - lg[p2 + a] - lg[p1 + b];
                }
            }
        }
    }
    return out;
}

// Max absolute deviation between two CCR fields over non-excluded pixels.
// exclusion_mask is 1-channel with 1 = excluded; pass an all-zero mask to
// measure everywhere.
inline double invariance_residual(const CcrMap& image_ccr, const CcrMap& reflectance_ccr,
                                  const Image& exclusion_mask) {
    if (image_ccr.height != reflectance_ccr.height || image_ccr.width != reflectance_ccr.width)
        throw ShapeError("invariance_residual: CCR map dimension mismatch");
    if (exclusion_mask.channels != 1 || exclusion_mask.height != image_ccr.height ||
        exclusion_mask.width != image_ccr.width)
        throw ShapeError("invariance_residual: mask dimension mismatch");

    double worst = 0.0;
    bool any = false;
    const std::size_t n = static_cast<std::size_t>(image_ccr.height) * image_ccr.width;
    for (std::size_t p = 0; p < n; ++p) {
        if (exclusion_mask.data[p] >= 0.5) continue;
        any = true;
        for (int k = 0; k < 6; ++k) {
            const double d = std::abs(image_ccr.data[6 * p + k] - reflectance_ccr.data[6 * p + k]);
            if (d > worst) worst = d;
        }
    }
    if (!any) throw EmptyDomainError("invariance_residual: every pixel excluded");
    return worst;
}

} // namespace iid
