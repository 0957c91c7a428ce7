#pragma once

#include "iid/core.hpp"
#include "iid/metrics.hpp"
#include "iid/network.hpp"
#include "iid/tensor.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace iid {

struct LossWeights {
    double lambda_u = 0.5;
    double lambda_e = 0.4;
    double lambda_d = 0.4;
    double lambda_p = 0.05;
    double lambda_smse = 0.95;
    double lambda_mse = 0.05;
};

inline constexpr std::uint64_t kDefaultExtractorSeed = 0x9e3779b97f4a7c15ULL;

namespace losses {

// lambda_smse * MSE(alpha* pred, gt) + lambda_mse * MSE(pred, gt) with
// alpha* = <pred,gt>/<pred,pred> (0 for an all-zero prediction). alpha* is
// a function of the prediction, so gradients flow through it.
inline Var pixel_loss(Var pred, Var gt, const LossWeights& w = {}) {
    ad::require_same_shape(pred, gt, "pixel_loss");
    Tape* t = pred.tape;
    Var pp = ad::sum_all(ad::mul(pred, pred));
    Var alpha;
    if (pp.value().scalar() == 0.0) {
        alpha = t->leaf(Tensor({1}, 0.0), "alpha_zero");
    } else {
        Var pg = ad::sum_all(ad::mul(pred, gt));
        alpha = ad::div(pg, pp);
    }
    Var smse = ad::mean_all(ad::square(ad::sub(ad::smul(alpha, pred), gt)));
    Var mse = ad::mean_all(ad::square(ad::sub(pred, gt)));
    return ad::add(ad::mul_scalar(smse, w.lambda_smse), ad::mul_scalar(mse, w.lambda_mse));
}

namespace detail {

inline void require_unit_range(const Var& v, const char* op) {
    for (double x : v.value().data)
        if (x < -1e-12 || x > 1.0 + 1e-12)
            throw DomainError(std::string(op) + ": values must lie in [0,1]");
}

// Valid-positions Gaussian filter with the shared SSIM kernel, one channel.
inline Var ssim_filter(Tape& t, Var x, Var kernel, Var zero_bias) {
    return ad::conv2d(x, kernel, zero_bias, 1, 0);
}

} // namespace detail

// Differentiable DSSIM with the same 11x11 sigma-1.5 kernel, constants, and
// summation order as metrics::dssim, so both paths agree to full precision.
inline Var dssim_loss(Var pred, Var gt) {
    ad::require_same_shape(pred, gt, "dssim_loss");
    const auto& s = pred.shape();
    if (s.size() != 4) throw ShapeError("dssim_loss: expect 4-D tensor");
    if (s[2] < metrics::kSsimWindow || s[3] < metrics::kSsimWindow)
        throw ShapeError("dssim_loss: image smaller than the 11x11 window");
    detail::require_unit_range(pred, "dssim_loss");
    detail::require_unit_range(gt, "dssim_loss");

    Tape* t = pred.tape;
    const int C = s[1];
    Tensor kern({1, 1, metrics::kSsimWindow, metrics::kSsimWindow}, metrics::ssim_kernel());
    Var kv = t->leaf(std::move(kern), "ssim_kernel");
    Var zb = t->leaf(Tensor({1}, 0.0), "ssim_zero_bias");

    Var acc;
    for (int c = 0; c < C; ++c) {
        Var x = ad::slice_channels(pred, c, c + 1);
        Var y = ad::slice_channels(gt, c, c + 1);
        Var mx = detail::ssim_filter(*t, x, kv, zb);
        Var my = detail::ssim_filter(*t, y, kv, zb);
        Var mxx = detail::ssim_filter(*t, ad::mul(x, x), kv, zb);
        Var myy = detail::ssim_filter(*t, ad::mul(y, y), kv, zb);
        Var mxy = detail::ssim_filter(*t, ad::mul(x, y), kv, zb);
        Var vx = ad::sub(mxx, ad::mul(mx, mx));
        Var vy = ad::sub(myy, ad::mul(my, my));
        Var cov = ad::sub(mxy, ad::mul(mx, my));
        Var num = ad::mul(ad::add_scalar(ad::mul_scalar(ad::mul(mx, my), 2.0), metrics::kSsimC1),
                          ad::add_scalar(ad::mul_scalar(cov, 2.0), metrics::kSsimC2));
        Var den = ad::mul(ad::add_scalar(ad::add(ad::mul(mx, mx), ad::mul(my, my)), metrics::kSsimC1),
                          ad::add_scalar(ad::add(vx, vy), metrics::kSsimC2));
        Var mean_ssim = ad::mean_all(ad::div(num, den));
        acc = c == 0 ? mean_ssim : ad::add(acc, mean_ssim);
    }
    Var ssim = ad::mul_scalar(acc, 1.0 / C);
    return ad::mul_scalar(ad::add_scalar(ad::mul_scalar(ssim, -1.0), 1.0), 0.5);
}

// Frozen random feature extractor standing in for a pretrained perceptual
// stack: four strided conv+ReLU stages, weights drawn once from the seed and
// never trained. The loss is the per-stage mean absolute feature difference,
// summed over all four stages.
inline Var perceptual_loss(Var pred, Var gt, std::uint64_t extractor_seed = kDefaultExtractorSeed) {
    ad::require_same_shape(pred, gt, "perceptual_loss");
    const auto& s = pred.shape();
    if (s.size() != 4 || s[1] != 3) throw ShapeError("perceptual_loss: expect [B,3,H,W]");
    if (s[2] % 16 != 0 || s[3] % 16 != 0)
        throw ShapeError("perceptual_loss: spatial size must be divisible by 16");

    Tape* t = pred.tape;
    static constexpr int kStageCh[4] = {8, 16, 32, 32};
    Var loss;
    Var fx = pred, fy = gt;
    int in_ch = 3;
    for (int stage = 0; stage < 4; ++stage) {
        const int out_ch = kStageCh[stage];
        Rng rng(splitmix64(extractor_seed + stage));
        Tensor w({out_ch, in_ch, 4, 4});
        const double std_dev = std::sqrt(2.0 / (static_cast<double>(in_ch) * 16.0));
        for (double& v : w.data) v = rng.normal() * std_dev;
        Var wv = t->leaf(std::move(w), "perc_w");
        Var bv = t->leaf(Tensor({out_ch}, 0.0), "perc_b");
        fx = ad::relu(ad::conv2d(fx, wv, bv, 2, 1));
        fy = ad::relu(ad::conv2d(fy, wv, bv, 2, 1));
        Var term = ad::mean_all(ad::abs(ad::sub(fx, fy)));
        loss = stage == 0 ? term : ad::add(loss, term);
        in_ch = out_ch;
    }
    return loss;
}

// Six supervision targets for the edge decoders: full, half, and quarter
// scale for reflectance and shading edges, replicated to three channels to
// match the decoder heads.
struct EdgeTargets {
    Tensor refl_full, refl_half, refl_quarter;
    Tensor shade_full, shade_half, shade_quarter;
};

struct EdgeLossResult {
    Var value;
    bool present = false; // false when the edge decoders are ablated away
};

inline EdgeLossResult edge_loss(Tape& tape, const ForwardBundle& bundle, const EdgeTargets& gt,
                                const LossWeights& w = {}) {
    if (!bundle.has_edges) {
        return {tape.leaf(Tensor({1}, 0.0), "edge_loss_zero"), false};
    }
    auto term = [&](Var out, const Tensor& target) {
        return pixel_loss(out, tape.leaf(Tensor(target), "edge_gt"), w);
    };
    Var total = term(bundle.refl_edge, gt.refl_full);
    total = ad::add(total, term(bundle.refl_edge_half, gt.refl_half));
    total = ad::add(total, term(bundle.refl_edge_quarter, gt.refl_quarter));
    total = ad::add(total, term(bundle.shading_edge, gt.shade_full));
    total = ad::add(total, term(bundle.shade_edge_half, gt.shade_half));
    total = ad::add(total, term(bundle.shade_edge_quarter, gt.shade_quarter));
    return {total, true};
}

} // namespace losses

// Ground-truth tensors for one batch.
struct LossTargets {
    Tensor image;       // [B,3,S,S]
    Tensor reflectance; // [B,3,S,S]
    Tensor shading;     // [B,1,S,S]
    losses::EdgeTargets edges;
};

// Named scalar terms plus the weighted total:
//   L = L_r + lu*L_u + le*L_e + lp*L_p + ld*L_dssim + L_rec
struct LossBreakdown {
    Var total;
    Var l_e, l_u, l_r, l_rec, l_dssim, l_p;
    bool edge_terms_present = false;

    double total_value() const { return total.value().scalar(); }
};

inline LossBreakdown total_loss(Tape& tape, const ForwardBundle& bundle, const LossTargets& gt,
                                const LossWeights& w = {},
                                std::uint64_t extractor_seed = kDefaultExtractorSeed) {
    using namespace losses;
    LossBreakdown out;
    Var gt_r = tape.leaf(Tensor(gt.reflectance), "gt_reflectance");
    Var gt_s = tape.leaf(Tensor(gt.shading), "gt_shading");
    Var gt_i = tape.leaf(Tensor(gt.image), "gt_image");

    auto term = [](const char* name, auto&& fn) {
        try {
            return fn();
        } catch (const NumericError& e) {
            throw NumericError(std::string("while computing ") + name + ": " + e.what());
        }
    };

    out.l_r = term("L_r", [&] {
        return ad::add(pixel_loss(bundle.refined_reflectance, gt_r, w),
                       pixel_loss(bundle.refined_shading, gt_s, w));
    });
    out.l_u = term("L_u", [&] {
        return ad::add(pixel_loss(bundle.unrefined_reflectance, gt_r, w),
                       pixel_loss(bundle.unrefined_shading, gt_s, w));
    });
    EdgeLossResult e = term("L_e", [&] { return edge_loss(tape, bundle, gt.edges, w); });
    out.l_e = e.value;
    out.edge_terms_present = e.present;

    out.l_rec = term("L_rec", [&] {
        Var recombined = ad::mul(bundle.refined_reflectance,
                                 ad::concat_channels({bundle.refined_shading, bundle.refined_shading,
                                                      bundle.refined_shading}));
        return pixel_loss(recombined, gt_i, w);
    });

    out.l_dssim = term("L_dssim", [&] {
        return ad::add(dssim_loss(bundle.refined_reflectance, gt_r),
                       dssim_loss(bundle.refined_shading, gt_s));
    });
    out.l_p = term("L_p", [&] {
        return perceptual_loss(bundle.refined_reflectance, gt_r, extractor_seed);
    });

    out.total = ad::add(
        out.l_r,
        ad::add(ad::mul_scalar(out.l_u, w.lambda_u),
                ad::add(ad::mul_scalar(out.l_e, w.lambda_e),
                        ad::add(ad::mul_scalar(out.l_p, w.lambda_p),
                                ad::add(ad::mul_scalar(out.l_dssim, w.lambda_d), out.l_rec)))));
    return out;
}

} // namespace iid
