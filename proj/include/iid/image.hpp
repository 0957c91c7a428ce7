#pragma once

#include "iid/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

namespace iid {

// Dense H x W x C grid of linear-light intensities, row-major
// (row, col, channel). The universal pixel container.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c),
          data(static_cast<std::size_t>(h) * w * c, fill) {
        if (h <= 0 || w <= 0 || (c != 1 && c != 3))
            throw ShapeError("Image: invalid dimensions " + std::to_string(h) + "x" +
                             std::to_string(w) + "x" + std::to_string(c));
    }

    double& at(int r, int c, int ch = 0) {
        return data[(static_cast<std::size_t>(r) * width + c) * channels + ch];
    }
    double at(int r, int c, int ch = 0) const {
        return data[(static_cast<std::size_t>(r) * width + c) * channels + ch];
    }
    std::size_t size() const { return data.size(); }

    bool same_dims(const Image& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
};

// A synthetic scene with exact ground truth: image = reflectance * shading,
// plus the soft shadow mask the shading was built from.
struct IntrinsicTriple {
    Image image;        // 3-channel
    Image reflectance;  // 3-channel
    Image shading;      // 1-channel, broadcast across RGB at composition
    Image shadow_mask;  // 1-channel in [0,1]; 1 = fully occluded
};

// image = reflectance * shading, shading broadcast over the color channels.
inline Image compose_lambertian(const Image& reflectance, const Image& shading) {
    if (reflectance.channels != 3)
        throw ShapeError("compose_lambertian: reflectance must have 3 channels");
    if (shading.channels != 1)
        throw ShapeError("compose_lambertian: shading must have 1 channel");
    if (reflectance.height != shading.height || reflectance.width != shading.width)
        throw ShapeError("compose_lambertian: dimension mismatch");
    for (double s : shading.data)
        if (s < 0.0) throw DomainError("compose_lambertian: negative shading");

    Image out(reflectance.height, reflectance.width, 3);
    const std::size_t n = static_cast<std::size_t>(reflectance.height) * reflectance.width;
    for (std::size_t p = 0; p < n; ++p) {
        const double s = shading.data[p];
        out.data[3 * p + 0] = reflectance.data[3 * p + 0] * s;
        out.data[3 * p + 1] = reflectance.data[3 * p + 1] * s;
        out.data[3 * p + 2] = reflectance.data[3 * p + 2] * s;
    }
    return out;
}

enum class GammaDirection { ToLinear, ToDisplay };

// Fixed 2.2 transfer curve, exact inverse pair on [0,1].
inline Image gamma_convert(const Image& img, GammaDirection direction) {
    constexpr double kGamma = 2.2;
    Image out = img;
    const double e = direction == GammaDirection::ToLinear ? kGamma : 1.0 / kGamma;
    for (double& v : out.data) {
        if (v < 0.0 || v > 1.0)
            throw DomainError("gamma_convert: value outside [0,1]");
        v = std::pow(v, e);
    }
    return out;
}

// Block mean over factor x factor cells, per channel.
inline Image avg_downsample(const Image& img, int factor) {
    if (factor <= 0) throw ConfigError("avg_downsample: factor must be positive");
    if (img.height % factor != 0 || img.width % factor != 0)
        throw ShapeError("avg_downsample: dimensions not divisible by factor");
    if (factor == 1) return img;

    Image out(img.height / factor, img.width / factor, img.channels);
    const double inv = 1.0 / (static_cast<double>(factor) * factor);
    for (int r = 0; r < out.height; ++r)
        for (int c = 0; c < out.width; ++c)
            for (int ch = 0; ch < img.channels; ++ch) {
                double acc = 0.0;
                for (int dr = 0; dr < factor; ++dr)
                    for (int dc = 0; dc < factor; ++dc)
                        acc += img.at(r * factor + dr, c * factor + dc, ch);
                out.at(r, c, ch) = acc * inv;
            }
    return out;
}

// Channel mean; identity for single-channel input.
inline Image luminance(const Image& img) {
    if (img.channels == 1) return img;
    Image out(img.height, img.width, 1);
    const std::size_t n = static_cast<std::size_t>(img.height) * img.width;
    for (std::size_t p = 0; p < n; ++p)
        out.data[p] = (img.data[3 * p] + img.data[3 * p + 1] + img.data[3 * p + 2]) / 3.0;
    return out;
}

} // namespace iid
