#pragma once

#include "iid/core.hpp"
#include "iid/tensor.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace iid {

enum class AttentionKind { Spatial, Channel, None };

struct Ablations {
    bool no_ccr_encoder = false;  // drop the invariant-descriptor encoder entirely
    bool no_edge_guidance = false; // drop the edge decoders and their gates
    bool canny_input = false;      // feed a 1-channel edge map instead of the 6-channel descriptor
    bool no_refinement = false;    // refined outputs alias the unrefined ones
};

// Scale-parameterized architecture description. The default is the
// desk-scale configuration: 32x32 input, base width 8, three downsampling
// stages, side outputs at 1/2 and 1/4 resolution.
struct NetworkConfig {
    int input_size = 32;
    int base_channels = 8;
    int n_stages = 3;
    AttentionKind attention_kind = AttentionKind::Spatial;
    int se_reduction = 4;
    Ablations ablations;
};

namespace net {

// Encoder channel ladder: doubles per stage, capped at 2^(n_stages-1) times
// the base so the bottleneck repeats the deepest width.
inline int enc_ch(const NetworkConfig& c, int level) {
    return std::min(1 << level, 1 << (c.n_stages - 1)) * c.base_channels;
}

// Decoder step j (1-based, j = 1..n_stages) outputs at spatial size
// S / 2^(n_stages - j) with enc_ch(n_stages + 1 - j) channels.
inline int dec_ch(const NetworkConfig& c, int step) { return enc_ch(c, c.n_stages + 1 - step); }

// The feature calibrator keeps fixed widths at every scale: narrowing it
// with the channel ladder would squeeze the whole refinement path through
// one channel at desk scale.
inline int calib_mid(const NetworkConfig&) { return 8; }
inline int calib_out(const NetworkConfig&) { return 16; }

inline int guide_channels(const NetworkConfig& c) { return c.ablations.canny_input ? 1 : 6; }

inline void validate(const NetworkConfig& c) {
    if (c.base_channels < 2) throw ConfigError("NetworkConfig: base_channels must be >= 2");
    if (c.n_stages < 3) throw ConfigError("NetworkConfig: n_stages must be >= 3 (side outputs)");
    if (c.input_size % (1 << c.n_stages) != 0)
        throw ConfigError("NetworkConfig: input_size must be divisible by 2^n_stages");
    if (c.input_size % 4 != 0) throw ConfigError("NetworkConfig: input_size must be divisible by 4");
    if (c.attention_kind == AttentionKind::Channel) {
        if (c.se_reduction < 1) throw ConfigError("NetworkConfig: se_reduction must be positive");
        for (int l = 0; l <= c.n_stages; ++l)
            if (enc_ch(c, l) % c.se_reduction != 0)
                throw ConfigError("NetworkConfig: channel attention requires widths divisible by "
                                  "se_reduction");
    }
}

// ---- layer specification (single source of truth for parameters & docs) ----

struct LayerSpec {
    std::string name;  // parameter prefix
    enum Kind { Conv, Tconv } kind = Conv;
    int in_ch = 0, out_ch = 0, k = 3, stride = 1, pad = 1;
    bool bn = true;       // BatchNorm + ReLU follow
    int spatial_out = 0;  // output H = W
    std::string note;
};

struct SeSiteSpec {
    std::string name; // parameter prefix for the two excitation affines
    int channels = 0;
};

struct NetworkLayout {
    std::vector<LayerSpec> layers;
    std::vector<SeSiteSpec> se_sites;
};

inline void append_encoder(const NetworkConfig& c, NetworkLayout& out, const std::string& prefix,
                           int in_ch, const std::string& note) {
    int s = c.input_size;
    for (int l = 0; l <= c.n_stages; ++l) {
        if (l == 0) {
            out.layers.push_back({prefix + ".s0a", LayerSpec::Conv, in_ch, enc_ch(c, 0), 3, 1, 1,
                                  true, s, note});
            out.layers.push_back(
                {prefix + ".s0b", LayerSpec::Conv, enc_ch(c, 0), enc_ch(c, 0), 3, 1, 1, true, s, ""});
        } else {
            s /= 2;
            out.layers.push_back({prefix + ".s" + std::to_string(l) + "a", LayerSpec::Conv,
                                  enc_ch(c, l - 1), enc_ch(c, l - 1), 4, 2, 1, true, s, ""});
            out.layers.push_back({prefix + ".s" + std::to_string(l) + "b", LayerSpec::Conv,
                                  enc_ch(c, l - 1), enc_ch(c, l), 3, 1, 1, true, s, ""});
        }
    }
}

// Decoder tower: n_stages transposed convolutions, a merge convolution back
// to the base width, then the output projection (sigmoid, no BN).
inline void append_decoder(const NetworkConfig& c, NetworkLayout& out, const std::string& prefix,
                           int d1_in, const std::vector<int>& extra_in_per_step, int merge_extra,
                           int out_channels, const std::string& note) {
    const int n = c.n_stages;
    int s = c.input_size >> (n - 1);
    out.layers.push_back({prefix + ".d1", LayerSpec::Tconv, d1_in, dec_ch(c, 1), 4, 2, 1, true, s, note});
    for (int j = 2; j <= n; ++j) {
        s *= 2;
        out.layers.push_back({prefix + ".d" + std::to_string(j), LayerSpec::Tconv,
                              dec_ch(c, j - 1) * 2 + extra_in_per_step[j - 2], dec_ch(c, j), 4, 2, 1,
                              true, s, ""});
    }
    out.layers.push_back({prefix + ".merge", LayerSpec::Conv, dec_ch(c, n) * 2 + merge_extra,
                          enc_ch(c, 0), 3, 1, 1, true, s, ""});
    out.layers.push_back(
        {prefix + ".out", LayerSpec::Conv, enc_ch(c, 0), out_channels, 3, 1, 1, false, s, "sigmoid"});
}

inline NetworkLayout build_layout(const NetworkConfig& c) {
    validate(c);
    NetworkLayout out;
    const int n = c.n_stages;
    const bool ccr = !c.ablations.no_ccr_encoder;
    const bool edges = !c.ablations.no_edge_guidance;
    const bool refine = !c.ablations.no_refinement;
    const int enc_streams = ccr ? 2 : 1;

    append_encoder(c, out, "img_enc", 3, "RGB input");
    if (ccr) append_encoder(c, out, "ccr_enc", guide_channels(c),
                            c.ablations.canny_input ? "Canny-edge input" : "log-CCR input");

    // skip channels per decoder step j = 2..n come from encoder level n-j+1
    std::vector<int> skip(n - 1);
    for (int j = 2; j <= n; ++j) skip[j - 2] = enc_ch(c, n - j + 1);

    if (edges) {
        std::vector<int> edge_extra = skip;
        for (int& v : edge_extra) v *= enc_streams;
        for (const char* tower : {"edge_r", "edge_s"})
            append_decoder(c, out, tower, enc_ch(c, n) * enc_streams, edge_extra,
                           enc_ch(c, 0) * enc_streams, 3, "linked pair");
        // Shared side-output heads, used by both edge towers.
        out.layers.push_back({"side_quarter", LayerSpec::Conv, dec_ch(c, n - 2), 3, 3, 1, 1, false,
                              c.input_size / 4, "shared head, sigmoid"});
        out.layers.push_back({"side_half", LayerSpec::Conv, dec_ch(c, n - 1), 3, 3, 1, 1, false,
                              c.input_size / 2, "shared head, sigmoid"});
    }

    for (const char* tower : {"unref_r", "unref_s"})
        append_decoder(c, out, tower, enc_ch(c, n), skip, enc_ch(c, 0),
                       tower[6] == 'r' ? 3 : 1, "linked pair, image-encoder skips");

    if (refine) {
        const int mid = calib_mid(c), co = calib_out(c);
        const int r_in = edges ? 6 : 3;
        const int s_in = edges ? 4 : 1;
        out.layers.push_back({"calib_r.c1", LayerSpec::Conv, r_in, mid, 1, 1, 0, true, c.input_size,
                              "feature calibration"});
        out.layers.push_back({"calib_r.c2", LayerSpec::Conv, mid, co, 1, 1, 0, true, c.input_size, ""});
        out.layers.push_back({"calib_s.c1", LayerSpec::Conv, s_in, mid, 1, 1, 0, true, c.input_size, ""});
        out.layers.push_back({"calib_s.c2", LayerSpec::Conv, mid, co, 1, 1, 0, true, c.input_size, ""});
        append_encoder(c, out, "ref_enc", 2 * co, "calibrated unrefined + edges");
        std::vector<int> ref_extra = skip;
        for (int& v : ref_extra) v *= ccr ? 3 : 2; // plain refiner skip + gated img (+ gated ccr)
        for (const char* tower : {"ref_r", "ref_s"})
            append_decoder(c, out, tower, enc_ch(c, n), ref_extra,
                           enc_ch(c, 0) * (ccr ? 3 : 2), tower[4] == 'r' ? 3 : 1,
                           "linked pair, attention-gated skips");
    }

    if (c.attention_kind == AttentionKind::Channel) {
        if (edges)
            for (const char* tower : {"unref_r", "unref_s"})
                for (int j = 1; j <= n; ++j)
                    out.se_sites.push_back(
                        {std::string(tower) + ".att" + std::to_string(j) + ".se", dec_ch(c, j)});
        if (refine)
            for (int l = 0; l < n; ++l) {
                out.se_sites.push_back({"ref.attimg" + std::to_string(l) + ".se", enc_ch(c, l)});
                if (ccr) out.se_sites.push_back({"ref.attccr" + std::to_string(l) + ".se", enc_ch(c, l)});
            }
    }
    return out;
}

} // namespace net

// Trainable tensors plus batch-norm running state, keyed by layer name.
// The name set is a pure function of the configuration.
struct NetworkParams {
    NetworkConfig config;
    std::map<std::string, Tensor> tensors; // trainable: .w .b .bn.gamma .bn.beta
    std::map<std::string, Tensor> state;   // batch-norm running mean/var
};

// He-style fan-in-scaled normal initialization for weights, zero biases,
// identity affine and unit-variance running state for the batch norms.
// Each tensor draws from its own name-derived stream, so initialization is
// independent of enumeration order.
inline NetworkParams build_network(const NetworkConfig& config, std::uint64_t seed) {
    net::NetworkLayout layout = net::build_layout(config);
    NetworkParams p;
    p.config = config;
    auto init_normal = [&](const std::string& name, std::vector<int> shape, double std_dev) {
        Rng rng(splitmix64(seed ^ fnv1a64(name)));
        Tensor t(std::move(shape));
        for (double& v : t.data) v = rng.normal() * std_dev;
        p.tensors.emplace(name, std::move(t));
    };
    for (const net::LayerSpec& l : layout.layers) {
        const double std_dev = std::sqrt(2.0 / (static_cast<double>(l.in_ch) * l.k * l.k));
        if (l.kind == net::LayerSpec::Conv)
            init_normal(l.name + ".w", {l.out_ch, l.in_ch, l.k, l.k}, std_dev);
        else
            init_normal(l.name + ".w", {l.in_ch, l.out_ch, l.k, l.k}, std_dev);
        p.tensors.emplace(l.name + ".b", Tensor({l.out_ch}, 0.0));
        if (l.bn) {
            p.tensors.emplace(l.name + ".bn.gamma", Tensor({l.out_ch}, 1.0));
            p.tensors.emplace(l.name + ".bn.beta", Tensor({l.out_ch}, 0.0));
            p.state.emplace(l.name + ".bn.run_mean", Tensor({l.out_ch}, 0.0));
            p.state.emplace(l.name + ".bn.run_var", Tensor({l.out_ch}, 1.0));
        }
    }
    for (const net::SeSiteSpec& s : layout.se_sites) {
        const int hidden = std::max(1, s.channels / config.se_reduction);
        init_normal(s.name + ".fc1.w", {hidden, s.channels, 1, 1},
                    std::sqrt(2.0 / static_cast<double>(s.channels)));
        p.tensors.emplace(s.name + ".fc1.b", Tensor({hidden}, 0.0));
        init_normal(s.name + ".fc2.w", {s.channels, hidden, 1, 1},
                    std::sqrt(2.0 / static_cast<double>(hidden)));
        p.tensors.emplace(s.name + ".fc2.b", Tensor({s.channels}, 0.0));
    }
    return p;
}

inline std::size_t param_count(const NetworkParams& p) {
    std::size_t n = 0;
    for (const auto& [name, t] : p.tensors) n += t.size();
    return n;
}

// ---- standalone attention primitives ----

// F_attn = sigmoid(guide) * target + target, elementwise.
inline Var spatial_attention(Var guide, Var target) {
    ad::require_same_shape(guide, target, "spatial_attention");
    return ad::add(ad::mul(ad::sigmoid(guide), target), target);
}

// Squeeze-and-excitation rescale of x: global average pool per channel,
// C -> C/r affine, ReLU, affine back to C, sigmoid, per-channel scale.
inline Var channel_attention(Var x, Var fc1w, Var fc1b, Var fc2w, Var fc2b, int se_reduction) {
    const auto& s = x.shape();
    if (s.size() != 4) throw ShapeError("channel_attention: expect 4-D tensor");
    if (s[1] % se_reduction != 0)
        throw ShapeError("channel_attention: channels not divisible by reduction");
    Var pooled = ad::gap_hw(x);
    Var h = ad::relu(ad::conv2d(pooled, fc1w, fc1b, 1, 0));
    Var w = ad::sigmoid(ad::conv2d(h, fc2w, fc2b, 1, 0));
    return ad::scale_channels(x, w);
}

// ---- forward pass ----

struct ForwardBundle {
    bool has_edges = false;
    bool has_refinement = false;
    Var refl_edge, shading_edge;               // full-scale, 3ch, sigmoid
    Var refl_edge_half, refl_edge_quarter;     // shared-head side outputs
    Var shade_edge_half, shade_edge_quarter;
    Var unrefined_reflectance;                 // 3ch
    Var unrefined_shading;                     // 1ch
    Var refined_reflectance;                   // alias of unrefined when no_refinement
    Var refined_shading;
};

struct ForwardResult {
    ForwardBundle bundle;
    std::map<std::string, Var> param_vars; // leaf Var per trainable tensor
};

namespace net {

// Materializes parameter tensors as tape leaves on first use and applies
// conv / transposed-conv / batch-norm blocks by name.
class ParamSession {
public:
    ParamSession(Tape& tape, NetworkParams& params, ad::BnMode mode)
        : tape_(tape), params_(params), mode_(mode) {}

    Var get(const std::string& name) {
        auto it = vars_.find(name);
        if (it != vars_.end()) return it->second;
        auto pt = params_.tensors.find(name);
        if (pt == params_.tensors.end()) throw ConfigError("missing parameter: " + name);
        Var v = tape_.leaf(Tensor(pt->second), name.c_str());
        vars_.emplace(name, v);
        return v;
    }

    Var conv_block(const std::string& name, Var x, int stride, int pad, bool bn_relu) {
        Var y = ad::conv2d(x, get(name + ".w"), get(name + ".b"), stride, pad);
        return bn_relu ? bn_relu_of(name, y) : y;
    }

    Var tconv_block(const std::string& name, Var x) {
        Var y = ad::transposed_conv2d(x, get(name + ".w"), get(name + ".b"), 2, 1);
        return bn_relu_of(name, y);
    }

    const std::map<std::string, Var>& vars() const { return vars_; }

private:
    Var bn_relu_of(const std::string& name, Var y) {
        Var z = ad::batch_norm(y, get(name + ".bn.gamma"), get(name + ".bn.beta"),
                               &params_.state.at(name + ".bn.run_mean"),
                               &params_.state.at(name + ".bn.run_var"), mode_);
        return ad::relu(z);
    }

    Tape& tape_;
    NetworkParams& params_;
    ad::BnMode mode_;
    std::map<std::string, Var> vars_;
};

inline std::vector<Var> run_encoder(const NetworkConfig& c, ParamSession& ps,
                                    const std::string& prefix, Var x) {
    std::vector<Var> feats;
    for (int l = 0; l <= c.n_stages; ++l) {
        const std::string s = prefix + ".s" + std::to_string(l);
        if (l == 0) {
            x = ps.conv_block(s + "a", x, 1, 1, true);
        } else {
            x = ps.conv_block(s + "a", x, 2, 1, true);
        }
        x = ps.conv_block(s + "b", x, 1, 1, true);
        feats.push_back(x);
    }
    return feats;
}

// One attention site. Spatial gating is parameter-free; channel gating
// computes excitation weights from the guide and rescales the target; None
// passes the target through unchanged (direct connection).
inline Var attention_site(const NetworkConfig& c, ParamSession& ps, const std::string& site,
                          Var guide, Var target) {
    switch (c.attention_kind) {
    case AttentionKind::Spatial:
        return spatial_attention(guide, target);
    case AttentionKind::Channel: {
        Var pooled = ad::gap_hw(guide);
        Var h = ad::relu(ad::conv2d(pooled, ps.get(site + ".se.fc1.w"), ps.get(site + ".se.fc1.b"), 1, 0));
        Var w = ad::sigmoid(ad::conv2d(h, ps.get(site + ".se.fc2.w"), ps.get(site + ".se.fc2.b"), 1, 0));
        return ad::add(ad::scale_channels(target, w), target);
    }
    case AttentionKind::None:
        return target;
    }
    throw ConfigError("attention_site: unknown kind");
}

} // namespace net

// Executes the four-module pipeline: two encoders, linked edge decoders
// with shared side-output heads, attention-guided unrefined decoders, and
// the local refinement module. guide_input carries the 6-channel descriptor
// field (or the 1-channel edge map under the canny_input ablation); it may
// be null only when the descriptor encoder is ablated away.
inline ForwardResult forward(Tape& tape, NetworkParams& params, const Tensor& image,
                             const Tensor* guide_input, ad::BnMode mode) {
    const NetworkConfig& c = params.config;
    net::validate(c);
    const int n = c.n_stages;
    const bool ccr = !c.ablations.no_ccr_encoder;
    const bool edges = !c.ablations.no_edge_guidance;
    const bool refine = !c.ablations.no_refinement;

    if (image.shape.size() != 4 || image.shape[1] != 3 || image.shape[2] != c.input_size ||
        image.shape[3] != c.input_size)
        throw ShapeError("forward: image must be [B,3," + std::to_string(c.input_size) + "," +
                         std::to_string(c.input_size) + "], got " + shape_str(image.shape));
    if (ccr) {
        if (!guide_input) throw ShapeError("forward: guide input required");
        if (guide_input->shape.size() != 4 || guide_input->shape[0] != image.shape[0] ||
            guide_input->shape[1] != net::guide_channels(c) ||
            guide_input->shape[2] != c.input_size || guide_input->shape[3] != c.input_size)
            throw ShapeError("forward: guide input must be [B," +
                             std::to_string(net::guide_channels(c)) + ",S,S], got " +
                             shape_str(guide_input->shape));
    }

    net::ParamSession ps(tape, params, mode);
    Var img_in = tape.leaf(Tensor(image), "image");
    std::vector<Var> img_f = net::run_encoder(c, ps, "img_enc", img_in);
    std::vector<Var> ccr_f;
    if (ccr) {
        Var ccr_in = tape.leaf(Tensor(*guide_input), "guide");
        ccr_f = net::run_encoder(c, ps, "ccr_enc", ccr_in);
    }

    ForwardBundle bundle;
    bundle.has_edges = edges;
    bundle.has_refinement = refine;

    // ---- linked edge decoders ----
    Var edge_logits_r, edge_logits_s;
    std::vector<Var> er_feat(n + 1), es_feat(n + 1); // deconv outputs by step
    if (edges) {
        Var start = ccr ? ad::concat_channels({img_f[n], ccr_f[n]}) : img_f[n];
        Var r = ps.tconv_block("edge_r.d1", start);
        Var s = ps.tconv_block("edge_s.d1", start);
        er_feat[1] = r;
        es_feat[1] = s;
        for (int j = 2; j <= n; ++j) {
            const int lvl = n - j + 1;
            std::vector<Var> rin = {r, s, img_f[lvl]};
            std::vector<Var> sin = {s, r, img_f[lvl]};
            if (ccr) {
                rin.push_back(ccr_f[lvl]);
                sin.push_back(ccr_f[lvl]);
            }
            Var r2 = ps.tconv_block("edge_r.d" + std::to_string(j), ad::concat_channels(rin));
            Var s2 = ps.tconv_block("edge_s.d" + std::to_string(j), ad::concat_channels(sin));
            r = r2;
            s = s2;
            er_feat[j] = r;
            es_feat[j] = s;
        }
        std::vector<Var> rmerge = {r, s, img_f[0]};
        std::vector<Var> smerge = {s, r, img_f[0]};
        if (ccr) {
            rmerge.push_back(ccr_f[0]);
            smerge.push_back(ccr_f[0]);
        }
        Var rm = ps.conv_block("edge_r.merge", ad::concat_channels(rmerge), 1, 1, true);
        Var sm = ps.conv_block("edge_s.merge", ad::concat_channels(smerge), 1, 1, true);
        edge_logits_r = ps.conv_block("edge_r.out", rm, 1, 1, false);
        edge_logits_s = ps.conv_block("edge_s.out", sm, 1, 1, false);
        bundle.refl_edge = ad::sigmoid(edge_logits_r);
        bundle.shading_edge = ad::sigmoid(edge_logits_s);
        // Shared side-output heads applied to both towers' features.
        bundle.refl_edge_quarter = ad::sigmoid(ps.conv_block("side_quarter", er_feat[n - 2], 1, 1, false));
        bundle.shade_edge_quarter = ad::sigmoid(ps.conv_block("side_quarter", es_feat[n - 2], 1, 1, false));
        bundle.refl_edge_half = ad::sigmoid(ps.conv_block("side_half", er_feat[n - 1], 1, 1, false));
        bundle.shade_edge_half = ad::sigmoid(ps.conv_block("side_half", es_feat[n - 1], 1, 1, false));
    }

    // ---- attention-guided unrefined decoders ----
    Var ur = ps.tconv_block("unref_r.d1", img_f[n]);
    Var us = ps.tconv_block("unref_s.d1", img_f[n]);
    if (edges) {
        ur = net::attention_site(c, ps, "unref_r.att1", er_feat[1], ur);
        us = net::attention_site(c, ps, "unref_s.att1", es_feat[1], us);
    }
    for (int j = 2; j <= n; ++j) {
        const int lvl = n - j + 1;
        Var ur2 = ps.tconv_block("unref_r.d" + std::to_string(j),
                                 ad::concat_channels({ur, us, img_f[lvl]}));
        Var us2 = ps.tconv_block("unref_s.d" + std::to_string(j),
                                 ad::concat_channels({us, ur, img_f[lvl]}));
        if (edges) {
            ur2 = net::attention_site(c, ps, "unref_r.att" + std::to_string(j), er_feat[j], ur2);
            us2 = net::attention_site(c, ps, "unref_s.att" + std::to_string(j), es_feat[j], us2);
        }
        ur = ur2;
        us = us2;
    }
    Var urm = ps.conv_block("unref_r.merge", ad::concat_channels({ur, us, img_f[0]}), 1, 1, true);
    Var usm = ps.conv_block("unref_s.merge", ad::concat_channels({us, ur, img_f[0]}), 1, 1, true);
    Var ur_logits = ps.conv_block("unref_r.out", urm, 1, 1, false);
    Var us_logits = ps.conv_block("unref_s.out", usm, 1, 1, false);
    if (edges && c.attention_kind == AttentionKind::Spatial) {
        // Output-level gates run on logits; the 3-channel shading-edge guide
        // is channel-averaged to match the 1-channel shading head.
        ur_logits = spatial_attention(edge_logits_r, ur_logits);
        us_logits = spatial_attention(ad::mean_channels(edge_logits_s), us_logits);
    }
    bundle.unrefined_reflectance = ad::sigmoid(ur_logits);
    bundle.unrefined_shading = ad::sigmoid(us_logits);

    // ---- local refinement ----
    if (refine) {
        Var rcal_in = edges ? ad::concat_channels({bundle.unrefined_reflectance, bundle.refl_edge})
                            : bundle.unrefined_reflectance;
        Var scal_in = edges ? ad::concat_channels({bundle.unrefined_shading, bundle.shading_edge})
                            : bundle.unrefined_shading;
        Var rcal = ps.conv_block("calib_r.c2", ps.conv_block("calib_r.c1", rcal_in, 1, 0, true), 1, 0, true);
        Var scal = ps.conv_block("calib_s.c2", ps.conv_block("calib_s.c1", scal_in, 1, 0, true), 1, 0, true);
        std::vector<Var> ref_f = net::run_encoder(c, ps, "ref_enc", ad::concat_channels({rcal, scal}));

        // Scale-matched attention-gated skips: at each level the first-stage
        // encoder features gate the refiner-encoder features of the same size.
        std::vector<Var> gate_img(n), gate_ccr(n);
        for (int l = 0; l < n; ++l) {
            gate_img[l] = net::attention_site(c, ps, "ref.attimg" + std::to_string(l), img_f[l], ref_f[l]);
            if (ccr)
                gate_ccr[l] =
                    net::attention_site(c, ps, "ref.attccr" + std::to_string(l), ccr_f[l], ref_f[l]);
        }

        Var rr = ps.tconv_block("ref_r.d1", ref_f[n]);
        Var rs = ps.tconv_block("ref_s.d1", ref_f[n]);
        for (int j = 2; j <= n; ++j) {
            const int lvl = n - j + 1;
            std::vector<Var> rin = {rr, rs, ref_f[lvl], gate_img[lvl]};
            std::vector<Var> sin = {rs, rr, ref_f[lvl], gate_img[lvl]};
            if (ccr) {
                rin.push_back(gate_ccr[lvl]);
                sin.push_back(gate_ccr[lvl]);
            }
            Var rr2 = ps.tconv_block("ref_r.d" + std::to_string(j), ad::concat_channels(rin));
            Var rs2 = ps.tconv_block("ref_s.d" + std::to_string(j), ad::concat_channels(sin));
            rr = rr2;
            rs = rs2;
        }
        std::vector<Var> rmerge = {rr, rs, ref_f[0], gate_img[0]};
        std::vector<Var> smerge = {rs, rr, ref_f[0], gate_img[0]};
        if (ccr) {
            rmerge.push_back(gate_ccr[0]);
            smerge.push_back(gate_ccr[0]);
        }
        Var rrm = ps.conv_block("ref_r.merge", ad::concat_channels(rmerge), 1, 1, true);
        Var rsm = ps.conv_block("ref_s.merge", ad::concat_channels(smerge), 1, 1, true);
        bundle.refined_reflectance = ad::sigmoid(ps.conv_block("ref_r.out", rrm, 1, 1, false));
        bundle.refined_shading = ad::sigmoid(ps.conv_block("ref_s.out", rsm, 1, 1, false));
    } else {
        bundle.refined_reflectance = bundle.unrefined_reflectance;
        bundle.refined_shading = bundle.unrefined_shading;
    }

    return ForwardResult{bundle, ps.vars()};
}

// Human-readable layer manifest for the given configuration. Regenerated
// programmatically; the committed copy in docs/ is compared against this
// string by the acceptance suite.
inline std::string describe_network(const NetworkConfig& c) {
    net::NetworkLayout layout = net::build_layout(c);
    std::ostringstream os;
    os << "# Layer manifest\n";
    os << "# input " << c.input_size << "x" << c.input_size << ", base width " << c.base_channels
       << ", " << c.n_stages << " downsampling stages\n";
    os << "# attention: "
       << (c.attention_kind == AttentionKind::Spatial
               ? "spatial"
               : c.attention_kind == AttentionKind::Channel ? "channel" : "none")
       << "\n";
    os << "# ablations:";
    if (c.ablations.no_ccr_encoder) os << " no_ccr_encoder";
    if (c.ablations.no_edge_guidance) os << " no_edge_guidance";
    if (c.ablations.canny_input) os << " canny_input";
    if (c.ablations.no_refinement) os << " no_refinement";
    os << "\n";
    os << "name | kind | in -> out | k,s,p | bn+relu | out size | note\n";
    for (const net::LayerSpec& l : layout.layers) {
        os << l.name << " | " << (l.kind == net::LayerSpec::Conv ? "conv" : "tconv") << " | "
           << l.in_ch << " -> " << l.out_ch << " | " << l.k << "," << l.stride << "," << l.pad
           << " | " << (l.bn ? "yes" : "no") << " | " << l.spatial_out << "x" << l.spatial_out
           << (l.note.empty() ? "" : " | " + l.note) << "\n";
    }
    for (const net::SeSiteSpec& s : layout.se_sites)
        os << s.name << " | se-excitation | " << s.channels << " -> " << s.channels << " | r="
           << c.se_reduction << "\n";
    return os.str();
}

} // namespace iid
