#pragma once

#include "iid/bridge.hpp"
#include "iid/core.hpp"
#include "iid/edges.hpp"
#include "iid/losses.hpp"
#include "iid/network.hpp"
#include "iid/synth.hpp"
#include "iid/tensor.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace iid {

struct TrainConfig {
    std::uint64_t seed = 1;
    SceneSpec scene;            // base spec; scene.seed anchors the dataset
    int dataset_count = 128;
    std::int64_t seed_stride = 1;
    int batch_size = 4;
    int steps = 200;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    LossWeights weights;
    NetworkConfig network;
};

inline void validate(const TrainConfig& c) {
    if (c.batch_size < 2) throw ConfigError("TrainConfig: batch_size must be >= 2 (batch norm)");
    if (c.steps < 1) throw ConfigError("TrainConfig: steps must be >= 1");
    if (c.dataset_count < 1) throw ConfigError("TrainConfig: dataset_count must be >= 1");
    if (c.scene.size != c.network.input_size)
        throw ConfigError("TrainConfig: scene size must match network input size");
    validate(c.scene);
    net::validate(c.network);
}

// ---- config <-> JSON (strict: unknown keys are errors) ----

namespace cfgio {

inline void require_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                         const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const auto& a : allowed)
            if (key == a) ok = true;
        if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

template <class T>
void get_if_present(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

inline nlohmann::json to_json(const SceneSpec& s) {
    return {{"seed", s.seed},
            {"size", s.size},
            {"n_patches", s.n_patches},
            {"shading_freq", s.shading_freq},
            {"n_shadows", s.n_shadows},
            {"shadow_strength", s.shadow_strength},
            {"penumbra_px", s.penumbra_px}};
}

inline SceneSpec scene_from_json(const nlohmann::json& j) {
    require_keys(j, {"seed", "size", "n_patches", "shading_freq", "n_shadows", "shadow_strength",
                     "penumbra_px"},
                 "scene");
    SceneSpec s;
    get_if_present(j, "seed", s.seed);
    get_if_present(j, "size", s.size);
    get_if_present(j, "n_patches", s.n_patches);
    get_if_present(j, "shading_freq", s.shading_freq);
    get_if_present(j, "n_shadows", s.n_shadows);
    get_if_present(j, "shadow_strength", s.shadow_strength);
    get_if_present(j, "penumbra_px", s.penumbra_px);
    return s;
}

inline nlohmann::json to_json(const NetworkConfig& c) {
    const char* kind = c.attention_kind == AttentionKind::Spatial   ? "spatial"
                       : c.attention_kind == AttentionKind::Channel ? "channel"
                                                                    : "none";
    return {{"input_size", c.input_size},
            {"base_channels", c.base_channels},
            {"n_stages", c.n_stages},
            {"attention_kind", kind},
            {"se_reduction", c.se_reduction},
            {"ablations",
             {{"no_ccr_encoder", c.ablations.no_ccr_encoder},
              {"no_edge_guidance", c.ablations.no_edge_guidance},
              {"canny_input", c.ablations.canny_input},
              {"no_refinement", c.ablations.no_refinement}}}};
}

inline NetworkConfig network_from_json(const nlohmann::json& j) {
    require_keys(j, {"input_size", "base_channels", "n_stages", "attention_kind", "se_reduction",
                     "ablations"},
                 "network");
    NetworkConfig c;
    get_if_present(j, "input_size", c.input_size);
    get_if_present(j, "base_channels", c.base_channels);
    get_if_present(j, "n_stages", c.n_stages);
    get_if_present(j, "se_reduction", c.se_reduction);
    if (j.contains("attention_kind")) {
        const std::string kind = j.at("attention_kind").get<std::string>();
        if (kind == "spatial") c.attention_kind = AttentionKind::Spatial;
        else if (kind == "channel") c.attention_kind = AttentionKind::Channel;
        else if (kind == "none") c.attention_kind = AttentionKind::None;
        else throw ConfigError("network.attention_kind: unknown value '" + kind + "'");
    }
    if (j.contains("ablations")) {
        const auto& a = j.at("ablations");
        require_keys(a, {"no_ccr_encoder", "no_edge_guidance", "canny_input", "no_refinement"},
                     "network.ablations");
        get_if_present(a, "no_ccr_encoder", c.ablations.no_ccr_encoder);
        get_if_present(a, "no_edge_guidance", c.ablations.no_edge_guidance);
        get_if_present(a, "canny_input", c.ablations.canny_input);
        get_if_present(a, "no_refinement", c.ablations.no_refinement);
    }
    return c;
}

inline nlohmann::json to_json(const LossWeights& w) {
    return {{"lambda_u", w.lambda_u},     {"lambda_e", w.lambda_e}, {"lambda_d", w.lambda_d},
            {"lambda_p", w.lambda_p},     {"lambda_smse", w.lambda_smse},
            {"lambda_mse", w.lambda_mse}};
}

inline LossWeights weights_from_json(const nlohmann::json& j) {
    require_keys(j, {"lambda_u", "lambda_e", "lambda_d", "lambda_p", "lambda_smse", "lambda_mse"},
                 "weights");
    LossWeights w;
    get_if_present(j, "lambda_u", w.lambda_u);
    get_if_present(j, "lambda_e", w.lambda_e);
    get_if_present(j, "lambda_d", w.lambda_d);
    get_if_present(j, "lambda_p", w.lambda_p);
    get_if_present(j, "lambda_smse", w.lambda_smse);
    get_if_present(j, "lambda_mse", w.lambda_mse);
    for (double v : {w.lambda_u, w.lambda_e, w.lambda_d, w.lambda_p, w.lambda_smse, w.lambda_mse})
        if (v < 0.0) throw ConfigError("weights: negative loss weight");
    return w;
}

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"seed", c.seed},
            {"scene", to_json(c.scene)},
            {"dataset_count", c.dataset_count},
            {"seed_stride", c.seed_stride},
            {"batch_size", c.batch_size},
            {"steps", c.steps},
            {"learning_rate", c.learning_rate},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"adam_eps", c.adam_eps},
            {"weights", to_json(c.weights)},
            {"network", to_json(c.network)}};
}

inline TrainConfig train_from_json(const nlohmann::json& j) {
    require_keys(j, {"seed", "scene", "dataset_count", "seed_stride", "batch_size", "steps",
                     "learning_rate", "beta1", "beta2", "adam_eps", "weights", "network"},
                 "config");
    TrainConfig c;
    get_if_present(j, "seed", c.seed);
    if (j.contains("scene")) c.scene = scene_from_json(j.at("scene"));
    get_if_present(j, "dataset_count", c.dataset_count);
    get_if_present(j, "seed_stride", c.seed_stride);
    get_if_present(j, "batch_size", c.batch_size);
    get_if_present(j, "steps", c.steps);
    get_if_present(j, "learning_rate", c.learning_rate);
    get_if_present(j, "beta1", c.beta1);
    get_if_present(j, "beta2", c.beta2);
    get_if_present(j, "adam_eps", c.adam_eps);
    if (j.contains("weights")) c.weights = weights_from_json(j.at("weights"));
    if (j.contains("network")) c.network = network_from_json(j.at("network"));
    return c;
}

inline std::string config_hash_hex(const nlohmann::json& config_json) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "0x%016llx",
                  static_cast<unsigned long long>(fnv1a64(config_json.dump())));
    return buf;
}

} // namespace cfgio

// ---- optimizer ----

struct AdamState {
    std::map<std::string, Tensor> m, v;
    std::int64_t step = 0;
};

// Standard bias-corrected adaptive-moment update, applied in place.
inline void adam_step(std::map<std::string, Tensor>& params,
                      const std::map<std::string, Tensor>& grads, AdamState& state, double lr,
                      double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (auto& [name, p] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) throw ShapeError("adam_step: missing gradient for " + name);
        const Tensor& g = git->second;
        if (g.shape != p.shape) throw ShapeError("adam_step: shape mismatch for " + name);
        Tensor& m = state.m.try_emplace(name, Tensor(p.shape, 0.0)).first->second;
        Tensor& v = state.v.try_emplace(name, Tensor(p.shape, 0.0)).first->second;
        for (std::size_t i = 0; i < p.size(); ++i) {
            m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * g.data[i];
            v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * g.data[i] * g.data[i];
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            p.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

// ---- prepared dataset ----

// One scene with everything the loss needs, precomputed.
struct TrainSample {
    IntrinsicTriple triple;
    CcrMap ccr;
    Image canny_map;            // used under the canny_input ablation
    Image redge, sedge;         // full-resolution ground-truth edges
    Image redge_h, redge_q, sedge_h, sedge_q;
};

inline TrainSample prepare_sample(const SceneSpec& spec) {
    TrainSample s;
    s.triple = generate_scene(spec);
    s.ccr = log_ccr_map(s.triple.image);
    s.canny_map = canny(luminance(s.triple.image));
    auto [re, se] = derive_gt_edges(s.triple);
    s.redge = re;
    s.sedge = se;
    auto [rh, rq] = edge_pyramid(s.redge);
    auto [sh, sq] = edge_pyramid(s.sedge);
    s.redge_h = rh;
    s.redge_q = rq;
    s.sedge_h = sh;
    s.sedge_q = sq;
    return s;
}

inline std::vector<TrainSample> prepare_dataset(const TrainConfig& cfg) {
    std::vector<TrainSample> out;
    out.reserve(cfg.dataset_count);
    for (int i = 0; i < cfg.dataset_count; ++i) {
        SceneSpec spec = cfg.scene;
        spec.seed = cfg.scene.seed + static_cast<std::uint64_t>(i) * cfg.seed_stride;
        out.push_back(prepare_sample(spec));
    }
    return out;
}

namespace detail {

inline Tensor replicate3(const Tensor& t) {
    Tensor out({t.dim(0), 3, t.dim(2), t.dim(3)});
    const std::size_t hw = static_cast<std::size_t>(t.dim(2)) * t.dim(3);
    for (int b = 0; b < t.dim(0); ++b)
        for (int c = 0; c < 3; ++c)
            std::copy_n(t.data.begin() + static_cast<std::ptrdiff_t>(b * hw), hw,
                        out.data.begin() + static_cast<std::ptrdiff_t>((b * 3 + c) * hw));
    return out;
}

template <class Get>
Tensor gather(const std::vector<const TrainSample*>& batch, Get get) {
    std::vector<const Image*> ptr;
    ptr.reserve(batch.size());
    for (const TrainSample* s : batch) ptr.push_back(get(*s));
    return batch_to_tensor(ptr);
}

} // namespace detail

// Deterministic, stateless batch sampling: indices for a step depend only on
// (seed, step), so resuming from a checkpoint needs no RNG replay.
inline std::vector<int> batch_indices(const TrainConfig& cfg, std::int64_t step) {
    std::vector<int> out;
    out.reserve(cfg.batch_size);
    std::uint64_t k = 0;
    while (static_cast<int>(out.size()) < cfg.batch_size) {
        const std::uint64_t r =
            splitmix64(cfg.seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(step) * 0x100000001b3ULL + k);
        ++k;
        const int idx = static_cast<int>(r % static_cast<std::uint64_t>(cfg.dataset_count));
        bool dup = false;
        for (int v : out)
            if (v == idx) dup = true;
        if (!dup || cfg.batch_size > cfg.dataset_count) out.push_back(idx);
    }
    return out;
}

struct StepLoss {
    std::int64_t step = 0;
    double l_e = 0.0, l_u = 0.0, l_r = 0.0, l_rec = 0.0, l_dssim = 0.0, l_p = 0.0, total = 0.0;
};

struct TrainResult {
    TrainConfig config;
    NetworkParams params;
    AdamState adam;
    std::int64_t step = 0;
    std::vector<StepLoss> trace;
};

inline LossTargets batch_targets(const NetworkConfig& net_cfg,
                                 const std::vector<const TrainSample*>& batch) {
    LossTargets t;
    t.image = detail::gather(batch, [](const TrainSample& s) { return &s.triple.image; });
    t.reflectance = detail::gather(batch, [](const TrainSample& s) { return &s.triple.reflectance; });
    t.shading = detail::gather(batch, [](const TrainSample& s) { return &s.triple.shading; });
    if (!net_cfg.ablations.no_edge_guidance) {
        t.edges.refl_full = detail::replicate3(detail::gather(batch, [](const TrainSample& s) { return &s.redge; }));
        t.edges.refl_half = detail::replicate3(detail::gather(batch, [](const TrainSample& s) { return &s.redge_h; }));
        t.edges.refl_quarter = detail::replicate3(detail::gather(batch, [](const TrainSample& s) { return &s.redge_q; }));
        t.edges.shade_full = detail::replicate3(detail::gather(batch, [](const TrainSample& s) { return &s.sedge; }));
        t.edges.shade_half = detail::replicate3(detail::gather(batch, [](const TrainSample& s) { return &s.sedge_h; }));
        t.edges.shade_quarter = detail::replicate3(detail::gather(batch, [](const TrainSample& s) { return &s.sedge_q; }));
    }
    return t;
}

inline Tensor batch_guide(const NetworkConfig& net_cfg,
                          const std::vector<const TrainSample*>& batch) {
    if (net_cfg.ablations.no_ccr_encoder) return Tensor{};
    if (net_cfg.ablations.canny_input)
        return detail::gather(batch, [](const TrainSample& s) { return &s.canny_map; });
    std::vector<const CcrMap*> ptr;
    for (const TrainSample* s : batch) ptr.push_back(&s->ccr);
    return batch_ccr_to_tensor(ptr);
}

// Runs steps start_step+1 .. config.steps on the given parameter and
// optimizer state. Deterministic given (config, state): the loss trace and
// final parameters are bit-identical across runs.
inline TrainResult train_continue(const TrainConfig& cfg, NetworkParams params, AdamState adam,
                                  std::int64_t start_step) {
    validate(cfg);
    std::vector<TrainSample> dataset = prepare_dataset(cfg);

    TrainResult result;
    result.config = cfg;
    for (std::int64_t step = start_step + 1; step <= cfg.steps; ++step) {
        std::vector<const TrainSample*> batch;
        for (int idx : batch_indices(cfg, step)) batch.push_back(&dataset[idx]);
        LossTargets targets = batch_targets(cfg.network, batch);
        Tensor guide = batch_guide(cfg.network, batch);

        Tape tape;
        ForwardResult fr = forward(tape, params, targets.image,
                                   guide.data.empty() ? nullptr : &guide, ad::BnMode::Train);
        LossBreakdown lb = total_loss(tape, fr.bundle, targets, cfg.weights);

        StepLoss sl;
        sl.step = step;
        sl.l_e = lb.l_e.value().scalar();
        sl.l_u = lb.l_u.value().scalar();
        sl.l_r = lb.l_r.value().scalar();
        sl.l_rec = lb.l_rec.value().scalar();
        sl.l_dssim = lb.l_dssim.value().scalar();
        sl.l_p = lb.l_p.value().scalar();
        sl.total = lb.total_value();
        const struct { const char* name; double v; } terms[] = {
            {"L_e", sl.l_e},   {"L_u", sl.l_u},         {"L_r", sl.l_r},
            {"L_rec", sl.l_rec}, {"L_dssim", sl.l_dssim}, {"L_p", sl.l_p},
            {"total", sl.total}};
        for (const auto& term : terms)
            if (!std::isfinite(term.v))
                throw NumericError("train: non-finite loss term " + std::string(term.name) +
                                   " at step " + std::to_string(step));
        result.trace.push_back(sl);

        tape.backward(lb.total);
        std::map<std::string, Tensor> grads;
        for (const auto& [name, var] : fr.param_vars) grads.emplace(name, tape.grad(var));
        adam_step(params.tensors, grads, adam, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
    }
    result.params = std::move(params);
    result.adam = std::move(adam);
    result.step = cfg.steps;
    return result;
}

inline TrainResult train(const TrainConfig& cfg) {
    validate(cfg);
    return train_continue(cfg, build_network(cfg.network, cfg.seed), AdamState{}, 0);
}

// ---- checkpoint IO ----
//
// Layout: magic "PIEF", 1-byte version, 4-byte little-endian header length,
// JSON header (config, config hash, step counter, sampler state, tensor
// manifest with name/shape/byte-offset), then raw little-endian float64
// payloads in manifest order.

inline constexpr char kCheckpointMagic[4] = {'P', 'I', 'E', 'F'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

struct Checkpoint {
    TrainConfig config;
    NetworkParams params;
    AdamState adam;
    std::int64_t step = 0;
};

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

inline void append_manifest(nlohmann::json& manifest, std::uint64_t& offset,
                            const std::string& prefix, const std::map<std::string, Tensor>& group) {
    for (const auto& [name, t] : group) {
        manifest.push_back(
            {{"name", prefix + name}, {"shape", t.shape}, {"offset", offset}});
        offset += t.size() * sizeof(double);
    }
}

} // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    nlohmann::json config_json = cfgio::to_json(ckpt.config);
    nlohmann::json manifest = nlohmann::json::array();
    std::uint64_t offset = 0;
    detail::append_manifest(manifest, offset, "param.", ckpt.params.tensors);
    detail::append_manifest(manifest, offset, "state.", ckpt.params.state);
    detail::append_manifest(manifest, offset, "adam_m.", ckpt.adam.m);
    detail::append_manifest(manifest, offset, "adam_v.", ckpt.adam.v);

    nlohmann::json header = {
        {"format_version", kCheckpointVersion},
        {"config", config_json},
        {"config_hash", cfgio::config_hash_hex(config_json)},
        {"step", ckpt.step},
        {"adam_step", ckpt.adam.step},
        {"sampler", {{"seed", ckpt.config.seed}, {"next_step", ckpt.step + 1}}},
        {"tensors", manifest}};
    const std::string header_text = header.dump();
    if (header_text.size() > 0xffffffffull) throw IoError("save_checkpoint: header too large");

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("save_checkpoint: cannot open " + path);
    out.write(kCheckpointMagic, 4);
    out.put(static_cast<char>(kCheckpointVersion));
    const std::uint32_t len = static_cast<std::uint32_t>(header_text.size());
    char lenbuf[4] = {static_cast<char>(len & 0xff), static_cast<char>((len >> 8) & 0xff),
                      static_cast<char>((len >> 16) & 0xff), static_cast<char>((len >> 24) & 0xff)};
    out.write(lenbuf, 4);
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    auto write_group = [&](const std::map<std::string, Tensor>& group) {
        for (const auto& [name, t] : group)
            out.write(reinterpret_cast<const char*>(t.data.data()),
                      static_cast<std::streamsize>(t.size() * sizeof(double)));
    };
    write_group(ckpt.params.tensors);
    write_group(ckpt.params.state);
    write_group(ckpt.adam.m);
    write_group(ckpt.adam.v);
    if (!out) throw IoError("save_checkpoint: write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_checkpoint: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 9) throw IoError("load_checkpoint: truncated file");
    if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
        throw IoError("load_checkpoint: bad magic bytes");
    const std::uint8_t version = static_cast<std::uint8_t>(bytes[4]);
    if (version != kCheckpointVersion)
        throw IoError("load_checkpoint: unsupported version " + std::to_string(version));
    const std::uint32_t header_len = static_cast<std::uint8_t>(bytes[5]) |
                                     (static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[6])) << 8) |
                                     (static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[7])) << 16) |
                                     (static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[8])) << 24);
    if (bytes.size() < 9ull + header_len) throw IoError("load_checkpoint: truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(9, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("load_checkpoint: malformed header: ") + e.what());
    }

    Checkpoint ckpt;
    try {
        const nlohmann::json& config_json = header.at("config");
        if (cfgio::config_hash_hex(config_json) != header.at("config_hash").get<std::string>())
            throw IoError("load_checkpoint: config hash mismatch");
        ckpt.config = cfgio::train_from_json(config_json);
        ckpt.step = header.at("step").get<std::int64_t>();
        ckpt.adam.step = header.at("adam_step").get<std::int64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("load_checkpoint: malformed header: ") + e.what());
    }

    // Shape skeleton from the config, then payload fill per the manifest.
    ckpt.params = build_network(ckpt.config.network, ckpt.config.seed);
    const char* payload = bytes.data() + 9 + header_len;
    const std::size_t payload_size = bytes.size() - 9 - header_len;
    for (const auto& entry : header.at("tensors")) {
        const std::string full = entry.at("name").get<std::string>();
        const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
        const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
        Tensor* target = nullptr;
        std::string name;
        AdamState& adam = ckpt.adam;
        if (full.rfind("param.", 0) == 0) {
            name = full.substr(6);
            auto it = ckpt.params.tensors.find(name);
            if (it == ckpt.params.tensors.end())
                throw IoError("load_checkpoint: unknown tensor " + full);
            target = &it->second;
        } else if (full.rfind("state.", 0) == 0) {
            name = full.substr(6);
            auto it = ckpt.params.state.find(name);
            if (it == ckpt.params.state.end())
                throw IoError("load_checkpoint: unknown tensor " + full);
            target = &it->second;
        } else if (full.rfind("adam_m.", 0) == 0) {
            name = full.substr(7);
            target = &adam.m.try_emplace(name, Tensor(shape, 0.0)).first->second;
        } else if (full.rfind("adam_v.", 0) == 0) {
            name = full.substr(7);
            target = &adam.v.try_emplace(name, Tensor(shape, 0.0)).first->second;
        } else {
            throw IoError("load_checkpoint: unknown tensor group for " + full);
        }
        if (target->shape != shape)
            throw IoError("load_checkpoint: shape mismatch for " + full);
        const std::size_t nbytes = target->size() * sizeof(double);
        if (offset + nbytes > payload_size) throw IoError("load_checkpoint: truncated payload");
        std::memcpy(target->data.data(), payload + offset, nbytes);
    }
    return ckpt;
}

// ---- loss-trace serialization (full precision, bit-exact round trip) ----

inline std::string trace_to_csv(const std::vector<StepLoss>& trace) {
    std::string out = "step,L_e,L_u,L_r,L_rec,L_dssim,L_p,total\n";
    char line[256];
    for (const StepLoss& s : trace) {
        std::snprintf(line, sizeof line, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      static_cast<long long>(s.step), s.l_e, s.l_u, s.l_r, s.l_rec, s.l_dssim,
                      s.l_p, s.total);
        out += line;
    }
    return out;
}

} // namespace iid
