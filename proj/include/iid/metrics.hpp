#pragma once

#include "iid/core.hpp"
#include "iid/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace iid {

namespace metrics {

inline void require_same_dims(const Image& a, const Image& b, const char* op) {
    if (!a.same_dims(b))
        throw ShapeError(std::string(op) + ": dimension mismatch");
}

inline double mse(const Image& pred, const Image& gt) {
    require_same_dims(pred, gt, "mse");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred.data[i] - gt.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

// Optimal global rescale of the prediction before MSE:
//   alpha* = <pred,gt> / <pred,pred>, alpha* = 0 for an all-zero prediction.
inline double smse(const Image& pred, const Image& gt) {
    require_same_dims(pred, gt, "smse");
    double pg = 0.0, pp = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        pg += pred.data[i] * gt.data[i];
        pp += pred.data[i] * pred.data[i];
    }
    const double alpha = pp > 0.0 ? pg / pp : 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = alpha * pred.data[i] - gt.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

namespace detail {

// Window start positions: stride steps plus an edge-flush window covering
// the last rows/cols when the stride does not land there exactly.
inline std::vector<int> window_starts(int extent, int window, int stride) {
    std::vector<int> starts;
    for (int p = 0; p + window <= extent; p += stride) starts.push_back(p);
    if (starts.empty() || starts.back() + window != extent) starts.push_back(extent - window);
    return starts;
}

inline double window_smse(const Image& pred, const Image& gt, int ch, int r0, int c0, int window) {
    double pg = 0.0, pp = 0.0;
    for (int r = r0; r < r0 + window; ++r)
        for (int c = c0; c < c0 + window; ++c) {
            const double p = pred.at(r, c, ch);
            pg += p * gt.at(r, c, ch);
            pp += p * p;
        }
    const double alpha = pp > 0.0 ? pg / pp : 0.0;
    double acc = 0.0;
    for (int r = r0; r < r0 + window; ++r)
        for (int c = c0; c < c0 + window; ++c) {
            const double d = alpha * pred.at(r, c, ch) - gt.at(r, c, ch);
            acc += d * d;
        }
    return acc / (static_cast<double>(window) * window);
}

} // namespace detail

// Mean of per-window SMSE over sliding windows, per channel then averaged.
inline double lmse(const Image& pred, const Image& gt, int window = 20, int stride = 10) {
    require_same_dims(pred, gt, "lmse");
    if (pred.height < window || pred.width < window)
        throw ShapeError("lmse: image smaller than window");
    const auto rows = detail::window_starts(pred.height, window, stride);
    const auto cols = detail::window_starts(pred.width, window, stride);
    double total = 0.0;
    for (int ch = 0; ch < pred.channels; ++ch) {
        double acc = 0.0;
        for (int r0 : rows)
            for (int c0 : cols) acc += detail::window_smse(pred, gt, ch, r0, c0, window);
        total += acc / (static_cast<double>(rows.size()) * cols.size());
    }
    return total / pred.channels;
}

// 11x11 Gaussian SSIM kernel, sigma 1.5, normalized. Shared with the
// differentiable DSSIM loss so both paths agree to full precision.
inline const std::vector<double>& ssim_kernel() {
    static const std::vector<double> kernel = [] {
        std::vector<double> k(11 * 11);
        const double sigma = 1.5;
        double norm = 0.0;
        for (int y = 0; y < 11; ++y)
            for (int x = 0; x < 11; ++x) {
                const double dy = y - 5.0, dx = x - 5.0;
                k[y * 11 + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                norm += k[y * 11 + x];
            }
        for (double& v : k) v /= norm;
        return k;
    }();
    return kernel;
}

inline constexpr double kSsimC1 = 0.01 * 0.01; // dynamic range 1.0
inline constexpr double kSsimC2 = 0.03 * 0.03;
inline constexpr int kSsimWindow = 11;

// Mean SSIM over all valid window positions, per channel, averaged.
inline double ssim(const Image& pred, const Image& gt) {
    require_same_dims(pred, gt, "ssim");
    if (pred.height < kSsimWindow || pred.width < kSsimWindow)
        throw ShapeError("ssim: image smaller than the 11x11 window");
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred.data[i] < -1e-12 || pred.data[i] > 1.0 + 1e-12 || gt.data[i] < -1e-12 ||
            gt.data[i] > 1.0 + 1e-12)
            throw DomainError("ssim: values must lie in [0,1]");
    const auto& kern = ssim_kernel();
    const int Ho = pred.height - kSsimWindow + 1;
    const int Wo = pred.width - kSsimWindow + 1;
    double total = 0.0;
    for (int ch = 0; ch < pred.channels; ++ch) {
        double acc = 0.0;
        for (int r0 = 0; r0 < Ho; ++r0)
            for (int c0 = 0; c0 < Wo; ++c0) {
                double mx = 0.0, my = 0.0, mxx = 0.0, myy = 0.0, mxy = 0.0;
                for (int ky = 0; ky < kSsimWindow; ++ky)
                    for (int kx = 0; kx < kSsimWindow; ++kx) {
                        const double w = kern[ky * kSsimWindow + kx];
                        const double x = pred.at(r0 + ky, c0 + kx, ch);
                        const double y = gt.at(r0 + ky, c0 + kx, ch);
                        mx += w * x;
                        my += w * y;
                        mxx += w * x * x;
                        myy += w * y * y;
                        mxy += w * x * y;
                    }
                const double vx = mxx - mx * mx;
                const double vy = myy - my * my;
                const double cov = mxy - mx * my;
                acc += ((2.0 * mx * my + kSsimC1) * (2.0 * cov + kSsimC2)) /
                       ((mx * mx + my * my + kSsimC1) * (vx + vy + kSsimC2));
            }
        total += acc / (static_cast<double>(Ho) * Wo);
    }
    return total / pred.channels;
}

inline double dssim(const Image& pred, const Image& gt) { return (1.0 - ssim(pred, gt)) / 2.0; }

// ---- WHDR ----

enum class DarkerLabel { ADarker, BDarker, Equal };

struct OrdinalJudgment {
    int ar = 0, ac = 0; // point A
    int br = 0, bc = 0; // point B
    DarkerLabel label = DarkerLabel::Equal;
    double weight = 1.0;
};

namespace detail {

inline DarkerLabel darker_label(double la, double lb, double delta) {
    la = std::max(la, 1e-6);
    lb = std::max(lb, 1e-6);
    const double ratio = la / lb;
    if (ratio >= 1.0 / (1.0 + delta) && ratio <= 1.0 + delta) return DarkerLabel::Equal;
    return la < lb ? DarkerLabel::ADarker : DarkerLabel::BDarker;
}

} // namespace detail

// Weighted fraction of human-style darker/equal judgments the predicted
// reflectance violates. Lightness is the channel mean.
inline double whdr(const Image& pred_reflectance, const std::vector<OrdinalJudgment>& judgments,
                   double delta = 0.10) {
    if (judgments.empty()) throw EmptyDomainError("whdr: no judgments");
    const Image light = luminance(pred_reflectance);
    double wrong = 0.0, total = 0.0;
    for (const OrdinalJudgment& j : judgments) {
        if (j.ar < 0 || j.ar >= light.height || j.ac < 0 || j.ac >= light.width || j.br < 0 ||
            j.br >= light.height || j.bc < 0 || j.bc >= light.width)
            throw DomainError("whdr: judgment point out of bounds");
        if (!(j.weight > 0.0)) throw DomainError("whdr: non-positive weight");
        const DarkerLabel predicted =
            detail::darker_label(light.at(j.ar, j.ac), light.at(j.br, j.bc), delta);
        if (predicted != j.label) wrong += j.weight;
        total += j.weight;
    }
    return wrong / total;
}

// Uniformly sampled pixel pairs labeled from the ground-truth reflectance
// with the WHDR rule; unit weights; deterministic from the seed.
inline std::vector<OrdinalJudgment> synth_judgments(const Image& gt_reflectance, int n_pairs,
                                                    std::uint64_t seed, double delta = 0.10) {
    if (n_pairs < 1) throw ConfigError("synth_judgments: n_pairs must be >= 1");
    Rng rng(seed);
    const Image light = luminance(gt_reflectance);
    std::vector<OrdinalJudgment> out;
    out.reserve(n_pairs);
    for (int i = 0; i < n_pairs; ++i) {
        OrdinalJudgment j;
        j.ar = static_cast<int>(rng.below(light.height));
        j.ac = static_cast<int>(rng.below(light.width));
        do {
            j.br = static_cast<int>(rng.below(light.height));
            j.bc = static_cast<int>(rng.below(light.width));
        } while (j.br == j.ar && j.bc == j.ac);
        j.label = detail::darker_label(light.at(j.ar, j.ac), light.at(j.br, j.bc), delta);
        j.weight = 1.0;
        out.push_back(j);
    }
    return out;
}

} // namespace metrics

// Per-image and aggregate evaluation results for a reflectance/shading pair.
struct ImageMetrics {
    double mse = 0.0;
    double smse = 0.0;
    double lmse = 0.0;
    double dssim = 0.0;
};

struct MetricsReport {
    std::vector<std::string> names;
    std::vector<ImageMetrics> reflectance;
    std::vector<ImageMetrics> shading;
    std::vector<double> whdr; // empty unless requested
    ImageMetrics mean_reflectance;
    ImageMetrics mean_shading;
    double mean_whdr = 0.0;
    bool has_whdr = false;

    void finalize() {
        auto mean_of = [](const std::vector<ImageMetrics>& v) {
            ImageMetrics m;
            if (v.empty()) return m;
            for (const ImageMetrics& x : v) {
                m.mse += x.mse;
                m.smse += x.smse;
                m.lmse += x.lmse;
                m.dssim += x.dssim;
            }
            const double n = static_cast<double>(v.size());
            m.mse /= n;
            m.smse /= n;
            m.lmse /= n;
            m.dssim /= n;
            return m;
        };
        mean_reflectance = mean_of(reflectance);
        mean_shading = mean_of(shading);
        if (has_whdr && !whdr.empty()) {
            mean_whdr = 0.0;
            for (double v : whdr) mean_whdr += v;
            mean_whdr /= static_cast<double>(whdr.size());
        }
    }
};

} // namespace iid
