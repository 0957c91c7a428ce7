// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion. Exit code 0 iff all pass.

#include "iid/dataset.hpp"
#include "iid/gradcheck.hpp"
#include "iid/metrics.hpp"
#include "iid/pipeline.hpp"
#include "iid/trainer.hpp"

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace iid;
using Clock = std::chrono::steady_clock;

namespace {

// Committed desk-scale training thresholds (criterion 5).
constexpr double kLossDropMin = 0.60;  // total loss falls >= 60% from step 1
constexpr double kReconMax = 0.02;     // held-out reconstruction pixel loss
                                       // (recalibrated once from the committed
                                       // oracle run; see docs and the trace)

struct Criterion {
    int id;
    std::string label;
    bool pass = true;
    std::vector<std::string> notes;

    void check(bool ok, const std::string& note) {
        pass = pass && ok;
        notes.push_back(std::string(ok ? "  ok   " : "  FAIL ") + note);
    }
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof buf, format, args);
    va_end(args);
    return buf;
}

// ---- independent brute-force metric oracles (criterion 3) ----

double oracle_mse(const Image& a, const Image& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

double oracle_smse(const Image& pred, const Image& gt) {
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

double oracle_lmse(const Image& pred, const Image& gt, int window, int stride) {
    auto starts = [&](int extent) {
        std::vector<int> s;
        for (int p = 0; p + window <= extent; p += stride) s.push_back(p);
        if (s.empty() || s.back() + window != extent) s.push_back(extent - window);
        return s;
    };
    const auto rows = starts(pred.height);
    const auto cols = starts(pred.width);
    double total = 0.0;
    for (int ch = 0; ch < pred.channels; ++ch) {
        double acc = 0.0;
        for (int r0 : rows)
            for (int c0 : cols) {
                Image pw(window, window, 1), gw(window, window, 1);
                for (int r = 0; r < window; ++r)
                    for (int c = 0; c < window; ++c) {
                        pw.at(r, c) = pred.at(r0 + r, c0 + c, ch);
                        gw.at(r, c) = gt.at(r0 + r, c0 + c, ch);
                    }
                acc += oracle_smse(pw, gw);
            }
        total += acc / (static_cast<double>(rows.size()) * cols.size());
    }
    return total / pred.channels;
}

double oracle_dssim(const Image& pred, const Image& gt) {
    const auto& kern = metrics::ssim_kernel();
    const int win = metrics::kSsimWindow;
    const int Ho = pred.height - win + 1;
    const int Wo = pred.width - win + 1;
    double total = 0.0;
    for (int ch = 0; ch < pred.channels; ++ch) {
        double acc = 0.0;
        for (int r0 = 0; r0 < Ho; ++r0)
            for (int c0 = 0; c0 < Wo; ++c0) {
                double mx = 0.0, my = 0.0;
                for (int ky = 0; ky < win; ++ky)
                    for (int kx = 0; kx < win; ++kx) {
                        mx += kern[ky * win + kx] * pred.at(r0 + ky, c0 + kx, ch);
                        my += kern[ky * win + kx] * gt.at(r0 + ky, c0 + kx, ch);
                    }
                double vx = 0.0, vy = 0.0, cov = 0.0;
                for (int ky = 0; ky < win; ++ky)
                    for (int kx = 0; kx < win; ++kx) {
                        const double w = kern[ky * win + kx];
                        const double dx = pred.at(r0 + ky, c0 + kx, ch) - mx;
                        const double dy = gt.at(r0 + ky, c0 + kx, ch) - my;
                        vx += w * dx * dx;
                        vy += w * dy * dy;
                        cov += w * dx * dy;
                    }
                acc += ((2.0 * mx * my + metrics::kSsimC1) * (2.0 * cov + metrics::kSsimC2)) /
                       ((mx * mx + my * my + metrics::kSsimC1) *
                        (vx + vy + metrics::kSsimC2));
            }
        total += acc / (static_cast<double>(Ho) * Wo);
    }
    return (1.0 - total / pred.channels) / 2.0;
}

double oracle_whdr(const Image& pred, const std::vector<metrics::OrdinalJudgment>& js,
                   double delta) {
    const Image l = luminance(pred);
    double bad = 0.0, tot = 0.0;
    for (const auto& j : js) {
        const double la = std::max(l.at(j.ar, j.ac), 1e-6);
        const double lb = std::max(l.at(j.br, j.bc), 1e-6);
        metrics::DarkerLabel p;
        if (la / lb > 1.0 + delta) p = metrics::DarkerLabel::BDarker;
        else if (lb / la > 1.0 + delta) p = metrics::DarkerLabel::ADarker;
        else p = metrics::DarkerLabel::Equal;
        if (p != j.label) bad += j.weight;
        tot += j.weight;
    }
    return bad / tot;
}

Image random_image(Rng& rng, int h, int w, int c, double lo = 0.0, double hi = 1.0) {
    Image img(h, w, c);
    for (double& v : img.data) v = rng.uniform(lo, hi);
    return img;
}

// Mixed scene specifications for the invariance sweep: shadowed scenes use
// full-strength occluders (the hard-negative case).
SceneSpec sweep_spec(int i) {
    SceneSpec s;
    s.seed = 1000 + i;
    s.size = 32;
    s.n_patches = 3 + (i % 6);
    s.shading_freq = 0.5 + 0.5 * (i % 4);
    s.n_shadows = i % 3;
    s.shadow_strength = 1.0;
    s.penumbra_px = 1.0 + (i % 3);
    return s;
}

double pixel_loss_value(const Image& pred, const Image& gt) {
    double pg = 0.0, pp = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        pg += pred.data[i] * gt.data[i];
        pp += pred.data[i] * pred.data[i];
    }
    const double alpha = pp > 0.0 ? pg / pp : 0.0;
    double smse = 0.0, mse = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double ds = alpha * pred.data[i] - gt.data[i];
        const double dm = pred.data[i] - gt.data[i];
        smse += ds * ds;
        mse += dm * dm;
    }
    const double n = static_cast<double>(pred.size());
    return 0.95 * smse / n + 0.05 * mse / n;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return {};
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

bool dirs_equal(const fs::path& a, const fs::path& b) {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(a)) names.push_back(e.path().filename().string());
    for (const std::string& n : names)
        if (slurp(a / n) != slurp(b / n)) return false;
    std::size_t count_b = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(b)) ++count_b;
    return count_b == names.size();
}

TrainConfig small_train_config() {
    TrainConfig cfg;
    cfg.seed = 17;
    cfg.scene.seed = 4000;
    cfg.scene.size = 16;
    cfg.scene.n_patches = 4;
    cfg.scene.n_shadows = 1;
    cfg.dataset_count = 6;
    cfg.batch_size = 2;
    cfg.steps = 8;
    cfg.network.input_size = 16;
    cfg.network.base_channels = 4;
    return cfg;
}

// ---- criteria ----

Criterion criterion1() {
    Criterion c{1, "CCR invariance with hard-negative localization"};
    const auto t0 = Clock::now();
    int masked_ok = 0, shadowed = 0, unmasked_ok = 0;
    for (int i = 0; i < 50; ++i) {
        SceneSpec spec = sweep_spec(i);
        SceneDetail detail;
        IntrinsicTriple t = generate_scene(spec, &detail);
        CcrMap mi = log_ccr_map(t.image);
        CcrMap mr = log_ccr_map(t.reflectance);
        Image mask = invariance_exclusion_mask(spec, detail, t);
        if (invariance_residual(mi, mr, mask) < 1e-3) ++masked_ok;
        if (spec.n_shadows > 0) {
            ++shadowed;
            Image empty(spec.size, spec.size, 1, 0.0);
            if (invariance_residual(mi, mr, empty) > 0.1) ++unmasked_ok;
        }
    }
    const double elapsed = seconds_since(t0);
    c.check(masked_ok == 50, fmt("masked residual < 1e-3 on %d/50 scenes", masked_ok));
    c.check(unmasked_ok == shadowed,
            fmt("unmasked residual > 0.1 on %d/%d shadowed scenes", unmasked_ok, shadowed));
    c.check(elapsed < 10.0, fmt("runtime %.2f s (< 10 s)", elapsed));
    return c;
}

Criterion criterion2() {
    Criterion c{2, "autodiff soundness"};
    const auto t0 = Clock::now();
    int prim_ok = 0, prim_total = 0;
    double worst = 0.0;
    for (const CheckResult& r : gradcheck::primitive_gradient_checks(1)) {
        ++prim_total;
        if (r.pass) ++prim_ok;
        worst = std::max(worst, r.max_rel_err);
    }
    for (const CheckResult& r : gradcheck::loss_gradient_checks(2)) {
        ++prim_total;
        if (r.pass) ++prim_ok;
        worst = std::max(worst, r.max_rel_err);
    }
    c.check(prim_ok == prim_total,
            fmt("%d/%d primitive and loss checks < 1e-6 (worst %.2e)", prim_ok, prim_total, worst));
    int net_ok = 0;
    double net_worst = 0.0;
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        CheckResult r = gradcheck::network_directional_check(seed);
        if (r.pass) ++net_ok;
        net_worst = std::max(net_worst, r.max_rel_err);
    }
    const double elapsed = seconds_since(t0);
    c.check(net_ok == 5, fmt("network directional check < 1e-4 on %d/5 seeds (worst %.2e)",
                             net_ok, net_worst));
    c.check(elapsed < 120.0, fmt("runtime %.1f s (< 2 min)", elapsed));
    return c;
}

Criterion criterion3() {
    Criterion c{3, "metric oracles"};
    Rng rng(33);
    double worst = 0.0;
    bool all_ok = true;
    for (int i = 0; i < 20; ++i) {
        Image pred = random_image(rng, 64, 64, 3);
        Image gt = random_image(rng, 64, 64, 3);
        const double d1 = std::abs(metrics::mse(pred, gt) - oracle_mse(pred, gt));
        const double d2 = std::abs(metrics::smse(pred, gt) - oracle_smse(pred, gt));
        const double d3 = std::abs(metrics::lmse(pred, gt) - oracle_lmse(pred, gt, 20, 10));
        const double d4 = std::abs(metrics::dssim(pred, gt) - oracle_dssim(pred, gt));
        auto js = metrics::synth_judgments(gt, 100, 7 + i);
        const double d5 = std::abs(metrics::whdr(pred, js) - oracle_whdr(pred, js, 0.10));
        worst = std::max({worst, d1, d2, d3, d4, d5});
        all_ok = all_ok && d1 < 1e-10 && d2 < 1e-10 && d3 < 1e-10 && d4 < 1e-10 && d5 < 1e-10;
    }
    c.check(all_ok, fmt("mse/smse/lmse/dssim/whdr vs loop oracles on 20 pairs (worst |diff| %.2e)",
                        worst));

    bool scale_ok = true;
    double scale_worst = 0.0;
    for (int i = 0; i < 5; ++i) {
        Image pred = random_image(rng, 32, 32, 3, 0.05, 1.0);
        Image gt = random_image(rng, 32, 32, 3, 0.05, 1.0);
        const double base = metrics::smse(pred, gt);
        for (double s : {0.1, 2.0, 10.0}) {
            Image scaled = pred;
            for (double& v : scaled.data) v *= s;
            const double diff = std::abs(metrics::smse(scaled, gt) - base);
            scale_worst = std::max(scale_worst, diff);
            scale_ok = scale_ok && diff < 1e-12;
        }
    }
    c.check(scale_ok, fmt("smse scale invariance c in {0.1,2,10} (worst |diff| %.2e)", scale_worst));

    // quadrant construction: zero bands keep every window single-scale
    Image gt(40, 40, 1, 0.0);
    auto fill = [&](int r0, int c0) {
        for (int r = r0; r < r0 + 10; ++r)
            for (int col = c0; col < c0 + 10; ++col) gt.at(r, col) = rng.uniform(0.2, 0.9);
    };
    fill(0, 0);
    fill(0, 30);
    fill(30, 0);
    fill(30, 30);
    Image pred = gt;
    for (int r = 20; r < 40; ++r)
        for (int col = 20; col < 40; ++col) pred.at(r, col) *= 2.0;
    const double l = metrics::lmse(pred, gt);
    const double s = metrics::smse(pred, gt);
    c.check(l == 0.0 && s > 0.0, fmt("quadrant case: lmse=%.3g smse=%.3g", l, s));
    return c;
}

Criterion criterion4(const std::string& docs_dir) {
    Criterion c{4, "architecture fidelity"};

    const std::string generated = describe_network(NetworkConfig{});
    const std::string documented = slurp(fs::path(docs_dir) / "architecture.md");
    const bool manifest_ok = !documented.empty() && documented.find(generated) != std::string::npos;
    c.check(manifest_ok, "generated layer manifest matches docs/architecture.md");

    // spatial-attention algebra to 1e-12
    {
        Tape t;
        Rng rng(3);
        Tensor g({1, 2, 4, 4}), x({1, 2, 4, 4});
        for (double& v : g.data) v = rng.uniform(-4.0, 4.0);
        for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
        Var out = spatial_attention(t.leaf(Tensor(g)), t.leaf(Tensor(x)));
        double worst = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double sig = 1.0 / (1.0 + std::exp(-g.data[i]));
            worst = std::max(worst, std::abs(out.value().data[i] - (1.0 + sig) * x.data[i]));
        }
        c.check(worst < 1e-12, fmt("spatial attention (1+sigma)*target algebra (worst %.2e)", worst));
    }

    // side-output weight sharing: each shared-head parameter moves both
    // towers' side outputs at its scale; no head parameter touches only one.
    {
        NetworkParams p = build_network(NetworkConfig{}, 13);
        SceneSpec spec;
        spec.seed = 600;
        spec.size = 32;
        IntrinsicTriple t = generate_scene(spec);
        CcrMap map = log_ccr_map(t.image);
        std::vector<const CcrMap*> mp = {&map};
        Tensor img = image_to_tensor(t.image);
        Tensor guide = batch_ccr_to_tensor(mp);
        auto side_outputs = [&](NetworkParams& params) {
            NetworkParams copy = params;
            Tape tape;
            ForwardResult fr = forward(tape, copy, img, &guide, ad::BnMode::Eval);
            return std::make_pair(fr.bundle.refl_edge_quarter.value().data,
                                  fr.bundle.shade_edge_quarter.value().data);
        };
        auto [rq0, sq0] = side_outputs(p);
        bool share_ok = true;
        int head_params = 0;
        for (const auto& [name, tensor] : p.tensors) {
            if (name.rfind("side_quarter", 0) != 0) continue;
            ++head_params;
            NetworkParams perturbed = p;
            perturbed.tensors.at(name).data[0] += 0.5;
            auto [rq, sq] = side_outputs(perturbed);
            share_ok = share_ok && rq != rq0 && sq != sq0; // both towers respond
        }
        c.check(share_ok && head_params == 2,
                "shared side head: perturbation moves both towers' outputs");
    }

    // every ablation flag builds and runs forward
    {
        bool all_ok = true;
        std::vector<NetworkConfig> configs;
        for (int mask = 0; mask < 16; ++mask) {
            NetworkConfig cfg;
            cfg.ablations.no_ccr_encoder = mask & 1;
            cfg.ablations.no_edge_guidance = mask & 2;
            cfg.ablations.canny_input = mask & 4;
            cfg.ablations.no_refinement = mask & 8;
            configs.push_back(cfg);
        }
        NetworkConfig none_attn;
        none_attn.attention_kind = AttentionKind::None;
        configs.push_back(none_attn);
        NetworkConfig chan_attn;
        chan_attn.attention_kind = AttentionKind::Channel;
        configs.push_back(chan_attn);
        for (const NetworkConfig& cfg : configs) {
            try {
                NetworkParams p = build_network(cfg, 3);
                SceneSpec spec;
                spec.seed = 700;
                spec.size = 32;
                IntrinsicTriple t = generate_scene(spec);
                IntrinsicTriple t2 = generate_scene(SceneSpec{701, 32});
                std::vector<const Image*> imgs = {&t.image, &t2.image};
                Tensor img = batch_to_tensor(imgs);
                Tensor guide;
                if (!cfg.ablations.no_ccr_encoder) {
                    if (cfg.ablations.canny_input) {
                        Image e1 = canny(luminance(t.image));
                        Image e2 = canny(luminance(t2.image));
                        std::vector<const Image*> es = {&e1, &e2};
                        guide = batch_to_tensor(es);
                    } else {
                        CcrMap m1 = log_ccr_map(t.image);
                        CcrMap m2 = log_ccr_map(t2.image);
                        std::vector<const CcrMap*> ms = {&m1, &m2};
                        guide = batch_ccr_to_tensor(ms);
                    }
                }
                Tape tape;
                ForwardResult fr = forward(tape, p, img, guide.data.empty() ? nullptr : &guide,
                                           ad::BnMode::Train);
                all_ok = all_ok && fr.bundle.refined_reflectance.shape()[1] == 3;
            } catch (const std::exception& e) {
                all_ok = false;
            }
        }
        c.check(all_ok, "all ablation flags and attention kinds build and run forward");
    }
    return c;
}

struct Criterion5Result {
    Criterion c{5, "desk-scale training"};
    Checkpoint checkpoint;
};

Criterion5Result criterion5() {
    Criterion5Result out;
    Criterion& c = out.c;
    const auto t0 = Clock::now();

    TrainConfig cfg; // spec defaults: 128 scenes, 32x32, 200 steps, batch 4
    TrainResult r = train(cfg);
    const double first = r.trace.front().total;
    const double last = r.trace.back().total;
    const double drop = 1.0 - last / first;
    c.check(drop >= kLossDropMin,
            fmt("total loss %.4f -> %.4f, drop %.1f%% (>= %.0f%%)", first, last, 100.0 * drop,
                100.0 * kLossDropMin));

    // held-out scenes: disjoint seed range
    double recon_sum = 0.0, dssim_pred = 0.0, dssim_trivial = 0.0;
    const int held = 32;
    for (int i = 0; i < held; ++i) {
        SceneSpec spec = cfg.scene;
        spec.seed = cfg.scene.seed +
                    static_cast<std::uint64_t>(cfg.dataset_count + i) * cfg.seed_stride;
        IntrinsicTriple t = generate_scene(spec);
        DecomposeOutputs dec = decompose(r.params, t.image);
        Image recon = compose_lambertian(dec.refined_reflectance, dec.refined_shading);
        recon_sum += pixel_loss_value(recon, t.image);
        dssim_pred += metrics::dssim(dec.refined_reflectance, t.reflectance);
        dssim_trivial += metrics::dssim(t.image, t.reflectance);
    }
    recon_sum /= held;
    dssim_pred /= held;
    dssim_trivial /= held;
    c.check(recon_sum < kReconMax,
            fmt("held-out reconstruction pixel loss %.5f (< %.3g)", recon_sum, kReconMax));
    c.check(dssim_pred < dssim_trivial,
            fmt("held-out refined-R DSSIM %.4f < trivial predictor %.4f", dssim_pred,
                dssim_trivial));

    // every network ablation trains with a finite, decreasing 50-step trace
    struct AblationCase {
        const char* name;
        NetworkConfig net;
    };
    std::vector<AblationCase> cases;
    {
        NetworkConfig a;
        a.ablations.no_ccr_encoder = true;
        cases.push_back({"no_ccr_encoder", a});
        NetworkConfig b;
        b.ablations.no_edge_guidance = true;
        cases.push_back({"no_edge_guidance", b});
        NetworkConfig d;
        d.ablations.canny_input = true;
        cases.push_back({"canny_input", d});
        NetworkConfig e;
        e.ablations.no_refinement = true;
        cases.push_back({"no_refinement", e});
        NetworkConfig f;
        f.attention_kind = AttentionKind::None;
        cases.push_back({"no_attention", f});
    }
    bool ablations_ok = true;
    std::string ablation_note = "50-step ablation traces finite and decreasing:";
    for (const AblationCase& ac : cases) {
        TrainConfig acfg;
        acfg.network = ac.net;
        acfg.steps = 50;
        acfg.dataset_count = 32;
        TrainResult ar = train(acfg);
        bool finite = true;
        for (const StepLoss& s : ar.trace) finite = finite && std::isfinite(s.total);
        const bool decreasing = ar.trace.back().total < ar.trace.front().total;
        ablations_ok = ablations_ok && finite && decreasing;
        ablation_note += fmt(" %s(%.3f->%.3f)", ac.name, ar.trace.front().total,
                             ar.trace.back().total);
    }
    c.check(ablations_ok, ablation_note);

    const double elapsed = seconds_since(t0);
    c.check(elapsed < 600.0, fmt("runtime %.1f s (< 10 min)", elapsed));
    out.checkpoint = Checkpoint{cfg, r.params, r.adam, r.step};
    return out;
}

Criterion criterion6() {
    Criterion c{6, "determinism"};
    const fs::path base = fs::temp_directory_path() / "iid_acceptance";
    fs::remove_all(base);
    fs::create_directories(base);

    // gen twice
    SceneSpec spec;
    spec.seed = 7;
    spec.size = 32;
    spec.n_shadows = 1;
    dataset::write_dataset((base / "gen_a").string(), spec, 4);
    dataset::write_dataset((base / "gen_b").string(), spec, 4);
    c.check(dirs_equal(base / "gen_a", base / "gen_b"), "gen twice: byte-identical directories");

    // train twice (small config), compare checkpoint bytes and traces
    TrainConfig cfg = small_train_config();
    TrainResult r1 = train(cfg);
    TrainResult r2 = train(cfg);
    save_checkpoint(Checkpoint{cfg, r1.params, r1.adam, r1.step}, (base / "a.pief").string());
    save_checkpoint(Checkpoint{cfg, r2.params, r2.adam, r2.step}, (base / "b.pief").string());
    c.check(slurp(base / "a.pief") == slurp(base / "b.pief") &&
                trace_to_csv(r1.trace) == trace_to_csv(r2.trace),
            "train twice: byte-identical checkpoints and loss traces");

    // decompose twice
    SceneSpec img_spec = cfg.scene;
    img_spec.seed = 9999;
    IntrinsicTriple t = generate_scene(img_spec);
    write_pnm((base / "input.ppm").string(), t.image, 16);
    Image input = read_pnm((base / "input.ppm").string());
    Checkpoint loaded = load_checkpoint((base / "a.pief").string());
    DecomposeOutputs d1 = decompose(loaded.params, input);
    DecomposeOutputs d2 = decompose(loaded.params, input);
    c.check(d1.refined_reflectance.data == d2.refined_reflectance.data &&
                d1.refined_shading.data == d2.refined_shading.data,
            "decompose twice: bit-identical outputs");

    // save/resume reproduces the uninterrupted trace
    TrainConfig full = cfg;
    full.steps = 8;
    TrainResult whole = train(full);
    TrainConfig halfc = cfg;
    halfc.steps = 4;
    TrainResult half = train(halfc);
    save_checkpoint(Checkpoint{full, half.params, half.adam, 4}, (base / "resume.pief").string());
    Checkpoint resumed = load_checkpoint((base / "resume.pief").string());
    TrainResult rest = train_continue(resumed.config, std::move(resumed.params),
                                      std::move(resumed.adam), resumed.step);
    bool trace_ok = half.trace.size() + rest.trace.size() == whole.trace.size();
    for (std::size_t i = 0; trace_ok && i < half.trace.size(); ++i)
        trace_ok = half.trace[i].total == whole.trace[i].total;
    for (std::size_t i = 0; trace_ok && i < rest.trace.size(); ++i)
        trace_ok = rest.trace[i].total == whole.trace[half.trace.size() + i].total;
    for (const auto& [name, tensor] : whole.params.tensors)
        trace_ok = trace_ok && tensor.data == rest.params.tensors.at(name).data;
    c.check(trace_ok, "checkpoint resume reproduces the uninterrupted loss trace exactly");

    fs::remove_all(base);
    return c;
}

Criterion criterion7() {
    Criterion c{7, "loss decomposition"};
    SceneSpec spec;
    spec.seed = 77;
    spec.size = 32;
    spec.n_shadows = 1;
    IntrinsicTriple t = generate_scene(spec);
    auto [re, se] = derive_gt_edges(t);
    auto [reh, req] = edge_pyramid(re);
    auto [seh, seq] = edge_pyramid(se);

    auto rep3 = [](const Tensor& x) {
        Tensor out({x.dim(0), 3, x.dim(2), x.dim(3)});
        const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
        for (int ch = 0; ch < 3; ++ch)
            std::copy_n(x.data.begin(), hw, out.data.begin() + static_cast<std::ptrdiff_t>(ch * hw));
        return out;
    };
    LossTargets gt;
    gt.image = image_to_tensor(t.image);
    gt.reflectance = image_to_tensor(t.reflectance);
    gt.shading = image_to_tensor(t.shading);
    gt.edges = {rep3(image_to_tensor(re)),  rep3(image_to_tensor(reh)), rep3(image_to_tensor(req)),
                rep3(image_to_tensor(se)),  rep3(image_to_tensor(seh)), rep3(image_to_tensor(seq))};

    NetworkParams p = build_network(NetworkConfig{}, 5);
    CcrMap map = log_ccr_map(t.image);
    std::vector<const CcrMap*> mp = {&map};
    Tensor guide = batch_ccr_to_tensor(mp);
    Tape tape;
    ForwardResult fr = forward(tape, p, gt.image, &guide, ad::BnMode::Train);
    LossWeights w; // defaults: 0.5 / 0.4 / 0.4 / 0.05 and 0.95 / 0.05
    LossBreakdown lb = total_loss(tape, fr.bundle, gt, w);
    const double recombined = lb.l_r.value().scalar() + w.lambda_u * lb.l_u.value().scalar() +
                              w.lambda_e * lb.l_e.value().scalar() +
                              w.lambda_p * lb.l_p.value().scalar() +
                              w.lambda_d * lb.l_dssim.value().scalar() +
                              lb.l_rec.value().scalar();
    const double diff = std::abs(lb.total_value() - recombined);
    c.check(diff < 1e-12,
            fmt("breakdown recombines with weights 0.5/0.4/0.4/0.05 and 0.95/0.05 (|diff| %.2e)",
                diff));
    c.check(w.lambda_u == 0.5 && w.lambda_e == 0.4 && w.lambda_d == 0.4 && w.lambda_p == 0.05 &&
                w.lambda_smse == 0.95 && w.lambda_mse == 0.05,
            "default weights are 0.5/0.4/0.4/0.05 with the 0.95/0.05 pixel combo");
    return c;
}

} // namespace

int main() {
    std::string docs_dir = IIDLAB_DOCS_DIR;
    std::vector<Criterion> results;
    results.push_back(criterion1());
    results.push_back(criterion2());
    results.push_back(criterion3());
    results.push_back(criterion4(docs_dir));
    Criterion5Result c5 = criterion5();
    results.push_back(c5.c);
    results.push_back(criterion6());
    results.push_back(criterion7());

    int passed = 0;
    for (const Criterion& c : results) {
        std::printf("[%s] criterion %d: %s\n", c.pass ? "PASS" : "FAIL", c.id, c.label.c_str());
        for (const std::string& note : c.notes) std::printf("%s\n", note.c_str());
        if (c.pass) ++passed;
    }
    std::printf("acceptance: %d/%zu criteria passed\n", passed, results.size());
    return passed == static_cast<int>(results.size()) ? 0 : 1;
}
