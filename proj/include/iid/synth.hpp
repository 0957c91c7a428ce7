#pragma once

#include "iid/ccr.hpp"
#include "iid/core.hpp"
#include "iid/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace iid {

// Procedural Lambertian scene description. The same spec always produces
// bit-identical output.
struct SceneSpec {
    std::uint64_t seed = 1;
    int size = 32;              // square images
    int n_patches = 4;          // piecewise-constant reflectance regions
    double shading_freq = 1.0;  // spatial frequency scale of the smooth shading
    int n_shadows = 2;          // cast-shadow polygons
    double shadow_strength = 0.9; // in (0,1]; 1 = fully black umbra
    double penumbra_px = 1.5;   // linear ramp width across the shadow boundary
};

struct ShadowPolygon {
    std::vector<double> xs, ys; // vertices, counter-clockwise
};

// Generator internals, exposed so tests can build analytic oracles
// (patch boundaries, shadow boundaries) without re-deriving them from pixels.
struct SceneDetail {
    std::vector<double> site_x, site_y;       // Voronoi sites
    std::vector<std::array<double, 3>> color; // per-patch reflectance
    std::vector<int> patch_id;                // per-pixel nearest site
    std::vector<ShadowPolygon> polygons;
};

namespace detail {

// Signed distance to a convex polygon boundary: positive inside.
inline double polygon_signed_distance(const ShadowPolygon& poly, double px, double py) {
    const std::size_t n = poly.xs.size();
    double dist = std::numeric_limits<double>::infinity();
    bool inside = true;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = (i + 1) % n;
        const double ex = poly.xs[j] - poly.xs[i];
        const double ey = poly.ys[j] - poly.ys[i];
        const double rx = px - poly.xs[i];
        const double ry = py - poly.ys[i];
        if (ex * ry - ey * rx < 0.0) inside = false; // CCW: inside means left of every edge
        const double len2 = ex * ex + ey * ey;
        double t = len2 > 0.0 ? (rx * ex + ry * ey) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const double dx = rx - t * ex;
        const double dy = ry - t * ey;
        dist = std::min(dist, std::hypot(dx, dy));
    }
    return inside ? dist : -dist;
}

inline ShadowPolygon random_convex_polygon(Rng& rng, int size) {
    // Vertices on a circle at sorted random angles: always convex.
    const double cx = rng.uniform(0.15, 0.85) * size;
    const double cy = rng.uniform(0.15, 0.85) * size;
    const double radius = rng.uniform(size / 8.0, size / 3.0);
    const int k = 3 + static_cast<int>(rng.below(4));
    std::vector<double> angles(k);
    for (double& a : angles) a = rng.uniform(0.0, 6.283185307179586);
    std::sort(angles.begin(), angles.end());
    ShadowPolygon poly;
    for (double a : angles) {
        poly.xs.push_back(cx + radius * std::cos(a));
        poly.ys.push_back(cy + radius * std::sin(a));
    }
    return poly;
}

} // namespace detail

inline void validate(const SceneSpec& spec) {
    if (spec.size < 8) throw ConfigError("SceneSpec: size must be >= 8");
    if (spec.n_patches < 1) throw ConfigError("SceneSpec: n_patches must be >= 1");
    if (spec.n_shadows < 0) throw ConfigError("SceneSpec: n_shadows must be >= 0");
    if (!(spec.shadow_strength > 0.0 && spec.shadow_strength <= 1.0))
        throw ConfigError("SceneSpec: shadow_strength must be in (0,1]");
    if (spec.penumbra_px < 0.0) throw ConfigError("SceneSpec: penumbra_px must be >= 0");
}

inline IntrinsicTriple generate_scene(const SceneSpec& spec, SceneDetail* detail_out = nullptr) {
    validate(spec);
    Rng rng(spec.seed);
    const int s = spec.size;

    SceneDetail detail;

    // Reflectance: nearest-site coloring, colors uniform in [0.1, 0.9].
    for (int i = 0; i < spec.n_patches; ++i) {
        detail.site_x.push_back(rng.uniform(0.0, static_cast<double>(s)));
        detail.site_y.push_back(rng.uniform(0.0, static_cast<double>(s)));
        detail.color.push_back({rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)});
    }
    Image reflectance(s, s, 3);
    detail.patch_id.assign(static_cast<std::size_t>(s) * s, 0);
    for (int r = 0; r < s; ++r) {
        for (int c = 0; c < s; ++c) {
            const double py = r + 0.5, px = c + 0.5;
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int i = 0; i < spec.n_patches; ++i) {
                const double dx = px - detail.site_x[i];
                const double dy = py - detail.site_y[i];
                const double d = dx * dx + dy * dy;
                if (d < best_d) {
                    best_d = d;
                    best = i;
                }
            }
            detail.patch_id[static_cast<std::size_t>(r) * s + c] = best;
            for (int ch = 0; ch < 3; ++ch) reflectance.at(r, c, ch) = detail.color[best][ch];
        }
    }

    // Smooth shading: sum of 2-4 low-frequency cosine gradients, normalized
    // into [0.3, 1.0]. A zero-variance field (shading_freq = 0) maps to the
    // midpoint 0.65.
    const int n_waves = 2 + static_cast<int>(rng.below(3));
    std::vector<double> amp(n_waves), fx(n_waves), fy(n_waves), phase(n_waves);
    for (int i = 0; i < n_waves; ++i) {
        amp[i] = rng.uniform(0.5, 1.0);
        const double theta = rng.uniform(0.0, 6.283185307179586);
        const double freq = rng.uniform(0.3, 1.0) * spec.shading_freq;
        fx[i] = freq * std::cos(theta);
        fy[i] = freq * std::sin(theta);
        phase[i] = rng.uniform(0.0, 6.283185307179586);
    }
    Image shading(s, s, 1);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int r = 0; r < s; ++r)
        for (int c = 0; c < s; ++c) {
            double v = 0.0;
            for (int i = 0; i < n_waves; ++i)
                v += amp[i] * std::cos(6.283185307179586 * (fx[i] * c + fy[i] * r) / s + phase[i]);
            shading.at(r, c) = v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (hi - lo < 1e-12) {
        for (double& v : shading.data) v = 0.65;
    } else {
        for (double& v : shading.data) v = 0.3 + 0.7 * (v - lo) / (hi - lo);
    }

    // Cast shadows: union of convex polygons with a linear penumbra ramp
    // centered on the boundary. Polygons that miss the frame (no umbra
    // pixel) are redrawn from the same stream, so requested shadows always
    // land in the image.
    Image shadow_mask(s, s, 1, 0.0);
    for (int i = 0; i < spec.n_shadows; ++i) {
        for (int attempt = 0; attempt < 64; ++attempt) {
            ShadowPolygon poly = detail::random_convex_polygon(rng, s);
            bool has_umbra = false;
            const double half = spec.penumbra_px * 0.5;
            for (int r = 0; r < s && !has_umbra; ++r)
                for (int c = 0; c < s; ++c) {
                    const double d = detail::polygon_signed_distance(poly, c + 0.5, r + 0.5);
                    if (d >= half + 0.5) {
                        has_umbra = true;
                        break;
                    }
                }
            if (!has_umbra) continue;
            detail.polygons.push_back(poly);
            for (int r = 0; r < s; ++r)
                for (int c = 0; c < s; ++c) {
                    const double d = detail::polygon_signed_distance(poly, c + 0.5, r + 0.5);
                    double m;
                    if (spec.penumbra_px <= 0.0) {
                        m = d > 0.0 ? 1.0 : 0.0;
                    } else {
                        m = std::clamp(0.5 + d / spec.penumbra_px, 0.0, 1.0);
                    }
                    shadow_mask.at(r, c) = std::max(shadow_mask.at(r, c), m);
                }
            break;
        }
    }
    for (int r = 0; r < s; ++r)
        for (int c = 0; c < s; ++c)
            shading.at(r, c) *= 1.0 - spec.shadow_strength * shadow_mask.at(r, c);

    IntrinsicTriple triple;
    triple.image = compose_lambertian(reflectance, shading);
    triple.reflectance = std::move(reflectance);
    triple.shading = std::move(shading);
    triple.shadow_mask = std::move(shadow_mask);
    if (detail_out) *detail_out = std::move(detail);
    return triple;
}

// Pixels whose CCR pair may straddle an illumination discontinuity or a
// reflectance edge: the full penumbra band, umbra pixels touching non-umbra,
// and patch-id discontinuities, all dilated by one pixel.
inline Image invariance_exclusion_mask(const SceneSpec& spec, const SceneDetail& detail,
                                       const IntrinsicTriple& triple) {
    const int s = spec.size;
    Image raw(s, s, 1, 0.0);
    auto mask_at = [&](int r, int c) -> double { return triple.shadow_mask.at(r, c); };
    for (int r = 0; r < s; ++r)
        for (int c = 0; c < s; ++c) {
            const double m = mask_at(r, c);
            if (m > 0.0 && m < 1.0) raw.at(r, c) = 1.0; // penumbra
            if (m == 1.0) { // umbra boundary
                for (int dr = -1; dr <= 1 && raw.at(r, c) == 0.0; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        const int rr = r + dr, cc = c + dc;
                        if (rr < 0 || rr >= s || cc < 0 || cc >= s) continue;
                        if (mask_at(rr, cc) < 1.0) {
                            raw.at(r, c) = 1.0;
                            break;
                        }
                    }
            }
            const int id = detail.patch_id[static_cast<std::size_t>(r) * s + c];
            if (c + 1 < s && detail.patch_id[static_cast<std::size_t>(r) * s + c + 1] != id)
                raw.at(r, c) = raw.at(r, c + 1) = 1.0;
            if (r + 1 < s && detail.patch_id[(static_cast<std::size_t>(r) + 1) * s + c] != id)
                raw.at(r, c) = raw.at(r + 1, c) = 1.0;
        }
    // One-pixel dilation so both endpoints of any suspect pair are excluded.
    Image mask(s, s, 1, 0.0);
    for (int r = 0; r < s; ++r)
        for (int c = 0; c < s; ++c) {
            for (int dr = -1; dr <= 1 && mask.at(r, c) == 0.0; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= s || cc < 0 || cc >= s) continue;
                    if (raw.at(rr, cc) > 0.0) {
                        mask.at(r, c) = 1.0;
                        break;
                    }
                }
        }
    return mask;
}

inline std::vector<IntrinsicTriple> generate_dataset(const SceneSpec& base_spec, int count,
                                                     std::int64_t seed_stride = 1) {
    if (count < 1) throw ConfigError("generate_dataset: count must be >= 1");
    std::vector<IntrinsicTriple> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        SceneSpec spec = base_spec;
        spec.seed = base_spec.seed + static_cast<std::uint64_t>(i) * seed_stride;
        out.push_back(generate_scene(spec));
    }
    return out;
}

} // namespace iid
