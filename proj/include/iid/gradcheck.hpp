#pragma once

#include "iid/bridge.hpp"
#include "iid/core.hpp"
#include "iid/edges.hpp"
#include "iid/losses.hpp"
#include "iid/network.hpp"
#include "iid/synth.hpp"
#include "iid/tensor.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace iid {

struct CheckResult {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

namespace gradcheck {

// Builds a scalar loss from leaf tensors placed on the given tape.
using BuildFn = std::function<Var(Tape&, std::vector<Var>&)>;

inline double eval_loss(const std::vector<Tensor>& inputs, const BuildFn& build) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(inputs.size());
    for (const Tensor& t : inputs) leaves.push_back(tape.leaf(Tensor(t)));
    return build(tape, leaves).value().scalar();
}

// Central finite differences against reverse-mode gradients, h = 1e-5.
// Relative error uses max(|analytic|, |fd|, 1e-3) as the denominator so the
// comparison stays meaningful where the finite-difference estimate itself
// carries cancellation noise.
inline double max_rel_err_fd(const std::vector<Tensor>& inputs, const BuildFn& build,
                             double h = 1e-5) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(inputs.size());
    for (const Tensor& t : inputs) leaves.push_back(tape.leaf(Tensor(t)));
    Var loss = build(tape, leaves);
    tape.backward(loss);

    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Tensor& analytic = tape.grad(leaves[k]);
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            std::vector<Tensor> plus = inputs;
            std::vector<Tensor> minus = inputs;
            plus[k].data[i] += h;
            minus[k].data[i] -= h;
            const double fd = (eval_loss(plus, build) - eval_loss(minus, build)) / (2.0 * h);
            const double an = analytic.data[i];
            const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-3});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

inline Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Scalarize an op output with a fixed random weighting so the upstream
// gradient in the check is non-uniform.
inline Var weighted_mean(Tape& tape, Var y, Rng& rng) {
    Tensor w(y.shape());
    for (double& v : w.data) v = rng.uniform(0.5, 1.5);
    Var wv = tape.leaf(std::move(w), "check_weight");
    return ad::mean_all(ad::mul(y, wv));
}

inline std::vector<CheckResult> primitive_gradient_checks(std::uint64_t seed = 1) {
    std::vector<CheckResult> results;
    const double tol = 1e-6;
    auto record = [&](const std::string& name, double err) {
        results.push_back({name, err, tol, err < tol});
    };

    {
        Rng rng(seed);
        auto x = random_tensor(rng, {2, 2, 5, 5});
        auto w = random_tensor(rng, {3, 2, 3, 3});
        auto b = random_tensor(rng, {3});
        std::uint64_t wseed = rng.next_u64();
        record("conv2d_s1p1", max_rel_err_fd({x, w, b}, [wseed](Tape& t, std::vector<Var>& v) {
                   Rng r(wseed);
                   return weighted_mean(t, ad::conv2d(v[0], v[1], v[2], 1, 1), r);
               }));
    }
    {
        Rng rng(seed + 1);
        auto x = random_tensor(rng, {1, 3, 6, 6});
        auto w = random_tensor(rng, {2, 3, 4, 4});
        auto b = random_tensor(rng, {2});
        std::uint64_t wseed = rng.next_u64();
        record("conv2d_s2p1", max_rel_err_fd({x, w, b}, [wseed](Tape& t, std::vector<Var>& v) {
                   Rng r(wseed);
                   return weighted_mean(t, ad::conv2d(v[0], v[1], v[2], 2, 1), r);
               }));
    }
    {
        Rng rng(seed + 2);
        auto x = random_tensor(rng, {2, 2, 3, 3});
        auto w = random_tensor(rng, {2, 3, 4, 4});
        auto b = random_tensor(rng, {3});
        std::uint64_t wseed = rng.next_u64();
        record("transposed_conv2d_421",
               max_rel_err_fd({x, w, b}, [wseed](Tape& t, std::vector<Var>& v) {
                   Rng r(wseed);
                   return weighted_mean(t, ad::transposed_conv2d(v[0], v[1], v[2], 2, 1), r);
               }));
    }
    {
        Rng rng(seed + 3);
        auto x = random_tensor(rng, {1, 2, 4, 4});
        auto w = random_tensor(rng, {2, 2, 3, 3});
        auto b = random_tensor(rng, {2});
        std::uint64_t wseed = rng.next_u64();
        record("transposed_conv2d_s1",
               max_rel_err_fd({x, w, b}, [wseed](Tape& t, std::vector<Var>& v) {
                   Rng r(wseed);
                   return weighted_mean(t, ad::transposed_conv2d(v[0], v[1], v[2], 1, 1), r);
               }));
    }
    {
        Rng rng(seed + 4);
        auto x = random_tensor(rng, {3, 2, 4, 4});
        auto g = random_tensor(rng, {2}, 0.5, 1.5);
        auto be = random_tensor(rng, {2});
        std::uint64_t wseed = rng.next_u64();
        record("batch_norm_train", max_rel_err_fd({x, g, be}, [wseed](Tape& t, std::vector<Var>& v) {
                   Rng r(wseed);
                   Tensor rm({2}, 0.0), rv({2}, 1.0);
                   return weighted_mean(
                       t, ad::batch_norm(v[0], v[1], v[2], &rm, &rv, ad::BnMode::Train), r);
               }));
        record("batch_norm_eval", max_rel_err_fd({x, g, be}, [wseed](Tape& t, std::vector<Var>& v) {
                   Rng r(wseed);
                   Tensor rm({2}, {0.1, -0.2});
                   Tensor rv({2}, {0.9, 1.3});
                   return weighted_mean(
                       t, ad::batch_norm(v[0], v[1], v[2], &rm, &rv, ad::BnMode::Eval), r);
               }));
    }
    {
        // relu and abs are checked away from their kink at 0.
        Rng rng(seed + 5);
        Tensor x = random_tensor(rng, {2, 3, 4, 4});
        for (double& v : x.data) v += (v >= 0.0 ? 0.2 : -0.2);
        std::uint64_t wseed = rng.next_u64();
        record("relu", max_rel_err_fd({x}, [wseed](Tape& t, std::vector<Var>& v) {
                   Rng r(wseed);
                   return weighted_mean(t, ad::relu(v[0]), r);
               }));
        record("abs", max_rel_err_fd({x}, [wseed](Tape& t, std::vector<Var>& v) {
                   Rng r(wseed);
                   return weighted_mean(t, ad::abs(v[0]), r);
               }));
        record("sigmoid", max_rel_err_fd({x}, [wseed](Tape& t, std::vector<Var>& v) {
                   Rng r(wseed);
                   return weighted_mean(t, ad::sigmoid(v[0]), r);
               }));
    }
    {
        Rng rng(seed + 6);
        auto a = random_tensor(rng, {2, 2, 3, 3});
        auto b = random_tensor(rng, {2, 2, 3, 3});
        Tensor d = random_tensor(rng, {2, 2, 3, 3});
        for (double& v : d.data) v = (v >= 0.0 ? 1.0 : -1.0) * (0.5 + std::abs(v)); // away from 0
        std::uint64_t wseed = rng.next_u64();
        auto check2 = [&](const char* name, Var (*op)(Var, Var), const Tensor& rhs) {
            record(name, max_rel_err_fd({a, rhs}, [wseed, op](Tape& t, std::vector<Var>& v) {
                       Rng r(wseed);
                       return weighted_mean(t, op(v[0], v[1]), r);
                   }));
        };
        check2("add", ad::add, b);
        check2("sub", ad::sub, b);
        check2("mul", ad::mul, b);
        check2("div", ad::div, d);
        record("add_scalar", max_rel_err_fd({a}, [wseed](Tape& t, std::vector<Var>& v) {
                   Rng r(wseed);
                   return weighted_mean(t, ad::add_scalar(v[0], 0.37), r);
               }));
        record("mul_scalar", max_rel_err_fd({a}, [wseed](Tape& t, std::vector<Var>& v) {
                   Rng r(wseed);
                   return weighted_mean(t, ad::mul_scalar(v[0], -1.7), r);
               }));
    }
    {
        Rng rng(seed + 7);
        auto a = random_tensor(rng, {2, 2, 3, 3});
        auto b = random_tensor(rng, {2, 3, 3, 3});
        std::uint64_t wseed = rng.next_u64();
        record("concat_channels", max_rel_err_fd({a, b}, [wseed](Tape& t, std::vector<Var>& v) {
                   Rng r(wseed);
                   return weighted_mean(t, ad::concat_channels({v[0], v[1], v[0]}), r);
               }));
        record("slice_channels", max_rel_err_fd({b}, [wseed](Tape& t, std::vector<Var>& v) {
                   Rng r(wseed);
                   return weighted_mean(t, ad::slice_channels(v[0], 1, 3), r);
               }));
        record("mean_channels", max_rel_err_fd({b}, [wseed](Tape& t, std::vector<Var>& v) {
                   Rng r(wseed);
                   return weighted_mean(t, ad::mean_channels(v[0]), r);
               }));
        record("gap_hw", max_rel_err_fd({b}, [wseed](Tape& t, std::vector<Var>& v) {
                   Rng r(wseed);
                   return weighted_mean(t, ad::gap_hw(v[0]), r);
               }));
    }
    {
        Rng rng(seed + 8);
        auto x = random_tensor(rng, {2, 4, 3, 3});
        auto s = random_tensor(rng, {2, 4, 1, 1}, 0.2, 1.5);
        auto sc = random_tensor(rng, {1}, 0.5, 1.5);
        std::uint64_t wseed = rng.next_u64();
        record("scale_channels", max_rel_err_fd({x, s}, [wseed](Tape& t, std::vector<Var>& v) {
                   Rng r(wseed);
                   return weighted_mean(t, ad::scale_channels(v[0], v[1]), r);
               }));
        record("smul", max_rel_err_fd({sc, x}, [wseed](Tape& t, std::vector<Var>& v) {
                   Rng r(wseed);
                   return weighted_mean(t, ad::smul(v[0], v[1]), r);
               }));
        record("sum_all", max_rel_err_fd({x}, [](Tape&, std::vector<Var>& v) {
                   return ad::mul_scalar(ad::sum_all(v[0]), 0.01);
               }));
        record("mean_all", max_rel_err_fd({x}, [](Tape&, std::vector<Var>& v) {
                   return ad::mean_all(ad::square(v[0]));
               }));
    }
    return results;
}

// Finite-difference checks for the loss functions themselves, perturbing
// the prediction tensors. DSSIM inputs stay inside [0.1, 0.9] so the +-h
// probes respect the unit-range precondition.
inline std::vector<CheckResult> loss_gradient_checks(std::uint64_t seed = 2) {
    std::vector<CheckResult> results;
    const double tol = 1e-6;
    auto record = [&](const std::string& name, double err) {
        results.push_back({name, err, tol, err < tol});
    };
    Rng rng(seed);
    Tensor pred = random_tensor(rng, {1, 3, 16, 16}, 0.1, 0.9);
    Tensor gt = random_tensor(rng, {1, 3, 16, 16}, 0.1, 0.9);
    Tensor pred1 = random_tensor(rng, {1, 1, 16, 16}, 0.1, 0.9);
    Tensor gt1 = random_tensor(rng, {1, 1, 16, 16}, 0.1, 0.9);

    record("pixel_loss", max_rel_err_fd({pred, gt}, [](Tape&, std::vector<Var>& v) {
               return losses::pixel_loss(v[0], v[1]);
           }));
    record("dssim_loss_3ch", max_rel_err_fd({pred, gt}, [](Tape&, std::vector<Var>& v) {
               return losses::dssim_loss(v[0], v[1]);
           }));
    record("dssim_loss_1ch", max_rel_err_fd({pred1, gt1}, [](Tape&, std::vector<Var>& v) {
               return losses::dssim_loss(v[0], v[1]);
           }));
    record("perceptual_loss", max_rel_err_fd({pred, gt}, [](Tape&, std::vector<Var>& v) {
               return losses::perceptual_loss(v[0], v[1]);
           }));
    return results;
}

// Directional-derivative check over every parameter of the full network
// plus the complete training objective:
//   (L(theta + h d) - L(theta - h d)) / 2h  vs  <grad L, d>
// for a random unit direction d over the whole parameter vector.
inline CheckResult network_directional_check(std::uint64_t seed,
                                             const NetworkConfig& config = NetworkConfig{},
                                             double h = 1e-7) {
    const double tol = 1e-4;

    SceneSpec base;
    base.seed = splitmix64(seed) | 1;
    base.size = config.input_size;
    base.n_patches = 5;
    base.n_shadows = 1;
    base.shadow_strength = 0.8;
    std::vector<IntrinsicTriple> scenes;
    std::vector<Image> redges, sedges;
    for (int i = 0; i < 2; ++i) {
        SceneSpec s = base;
        s.seed = base.seed + i;
        scenes.push_back(generate_scene(s));
        auto [re, se] = derive_gt_edges(scenes.back());
        redges.push_back(re);
        sedges.push_back(se);
    }
    auto replicate3 = [](const Tensor& t) {
        Tensor out({t.dim(0), 3, t.dim(2), t.dim(3)});
        const std::size_t hw = static_cast<std::size_t>(t.dim(2)) * t.dim(3);
        for (int b = 0; b < t.dim(0); ++b)
            for (int c = 0; c < 3; ++c)
                std::copy_n(t.data.begin() + static_cast<std::ptrdiff_t>(b * hw), hw,
                            out.data.begin() + static_cast<std::ptrdiff_t>((b * 3 + c) * hw));
        return out;
    };
    auto edge_scales = [&](const std::vector<Image>& maps) {
        std::vector<const Image*> fp, hp, qp;
        std::vector<Image> halves, quarters;
        for (const Image& m : maps) {
            auto [half, quarter] = edge_pyramid(m);
            halves.push_back(half);
            quarters.push_back(quarter);
        }
        std::vector<Tensor> out;
        std::vector<const Image*> ptr;
        for (const Image& m : maps) ptr.push_back(&m);
        out.push_back(replicate3(batch_to_tensor(ptr)));
        ptr.clear();
        for (const Image& m : halves) ptr.push_back(&m);
        out.push_back(replicate3(batch_to_tensor(ptr)));
        ptr.clear();
        for (const Image& m : quarters) ptr.push_back(&m);
        out.push_back(replicate3(batch_to_tensor(ptr)));
        return out;
    };

    LossTargets targets;
    {
        std::vector<const Image*> imgs, refls, shads;
        for (const auto& t : scenes) {
            imgs.push_back(&t.image);
            refls.push_back(&t.reflectance);
            shads.push_back(&t.shading);
        }
        targets.image = batch_to_tensor(imgs);
        targets.reflectance = batch_to_tensor(refls);
        targets.shading = batch_to_tensor(shads);
        auto r3 = edge_scales(redges);
        auto s3 = edge_scales(sedges);
        targets.edges = {r3[0], r3[1], r3[2], s3[0], s3[1], s3[2]};
    }
    Tensor guide;
    if (!config.ablations.no_ccr_encoder) {
        if (config.ablations.canny_input) {
            std::vector<Image> cannies;
            for (const auto& t : scenes) cannies.push_back(canny(luminance(t.image)));
            std::vector<const Image*> ptr;
            for (const Image& m : cannies) ptr.push_back(&m);
            guide = batch_to_tensor(ptr);
        } else {
            std::vector<CcrMap> maps;
            for (const auto& t : scenes) maps.push_back(log_ccr_map(t.image));
            std::vector<const CcrMap*> ptr;
            for (const CcrMap& m : maps) ptr.push_back(&m);
            guide = batch_ccr_to_tensor(ptr);
        }
    }

    NetworkParams theta = build_network(config, seed);

    auto eval_total = [&](const NetworkParams& p) {
        NetworkParams copy = p; // training forward mutates batch-norm state
        Tape tape;
        ForwardResult fr = forward(tape, copy, targets.image,
                                   guide.data.empty() ? nullptr : &guide, ad::BnMode::Train);
        return total_loss(tape, fr.bundle, targets).total_value();
    };

    // Random unit direction over the concatenated parameter vector.
    Rng drng(splitmix64(seed ^ 0xd1ec7ull));
    std::map<std::string, Tensor> dir;
    double norm_sq = 0.0;
    for (const auto& [name, t] : theta.tensors) {
        Tensor d(t.shape);
        for (double& v : d.data) {
            v = drng.normal();
            norm_sq += v * v;
        }
        dir.emplace(name, std::move(d));
    }
    const double inv_norm = 1.0 / std::sqrt(norm_sq);
    for (auto& [name, d] : dir)
        for (double& v : d.data) v *= inv_norm;

    double analytic_dot = 0.0;
    {
        NetworkParams copy = theta;
        Tape tape;
        ForwardResult fr = forward(tape, copy, targets.image,
                                   guide.data.empty() ? nullptr : &guide, ad::BnMode::Train);
        LossBreakdown lb = total_loss(tape, fr.bundle, targets);
        tape.backward(lb.total);
        for (const auto& [name, v] : fr.param_vars) {
            const Tensor& g = tape.grad(v);
            const Tensor& d = dir.at(name);
            for (std::size_t i = 0; i < g.size(); ++i) analytic_dot += g.data[i] * d.data[i];
        }
    }

    NetworkParams plus = theta, minus = theta;
    for (auto& [name, t] : plus.tensors) {
        const Tensor& d = dir.at(name);
        for (std::size_t i = 0; i < t.size(); ++i) t.data[i] += h * d.data[i];
    }
    for (auto& [name, t] : minus.tensors) {
        const Tensor& d = dir.at(name);
        for (std::size_t i = 0; i < t.size(); ++i) t.data[i] -= h * d.data[i];
    }
    const double fd = (eval_total(plus) - eval_total(minus)) / (2.0 * h);
#ifdef IID_GRADCHECK_VERBOSE
    std::fprintf(stderr, "seed %llu: fd=%.17g analytic=%.17g\n",
                 static_cast<unsigned long long>(seed), fd, analytic_dot);
#endif
    const double rel =
        std::abs(fd - analytic_dot) / std::max({std::abs(fd), std::abs(analytic_dot), 1e-5});
    return {"network_directional_seed_" + std::to_string(seed), rel, tol, rel < tol};
}

} // namespace gradcheck

} // namespace iid
