#pragma once

#include "iid/edges.hpp"
#include "iid/imageio.hpp"
#include "iid/metrics.hpp"
#include "iid/synth.hpp"
#include "iid/trainer.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace iid {

// On-disk dataset layout: per scene six 16-bit linear PNM files plus a JSON
// manifest sufficient to regenerate the whole directory bit-exactly.
struct DatasetManifest {
    int format_version = 1;
    SceneSpec base;
    int count = 0;
    std::int64_t seed_stride = 1;
    std::vector<std::string> names; // scene_0000, scene_0001, ...
};

namespace dataset {

inline std::string scene_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "scene_%04d", index);
    return buf;
}

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
    nlohmann::json scenes = nlohmann::json::array();
    for (int i = 0; i < m.count; ++i) {
        SceneSpec spec = m.base;
        spec.seed = m.base.seed + static_cast<std::uint64_t>(i) * m.seed_stride;
        scenes.push_back({{"name", m.names[i]},
                          {"seed", spec.seed},
                          {"files",
                           {{"image", m.names[i] + "_image.ppm"},
                            {"reflectance", m.names[i] + "_reflectance.ppm"},
                            {"shading", m.names[i] + "_shading.pgm"},
                            {"shadow", m.names[i] + "_shadow.pgm"},
                            {"redge", m.names[i] + "_redge.pgm"},
                            {"sedge", m.names[i] + "_sedge.pgm"}}}});
    }
    return {{"format_version", m.format_version},
            {"base_scene", cfgio::to_json(m.base)},
            {"count", m.count},
            {"seed_stride", m.seed_stride},
            {"scenes", scenes}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
    cfgio::require_keys(j, {"format_version", "base_scene", "count", "seed_stride", "scenes"},
                        "manifest");
    DatasetManifest m;
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != 1)
        throw IoError("manifest: unsupported format_version " + std::to_string(m.format_version));
    m.base = cfgio::scene_from_json(j.at("base_scene"));
    m.count = j.at("count").get<int>();
    m.seed_stride = j.at("seed_stride").get<std::int64_t>();
    for (const auto& s : j.at("scenes")) m.names.push_back(s.at("name").get<std::string>());
    if (static_cast<int>(m.names.size()) != m.count)
        throw IoError("manifest: scene list does not match count");
    return m;
}

// Generates and writes count scenes with their ground-truth maps and edge
// files. Deterministic: the same arguments always produce byte-identical
// directories.
inline DatasetManifest write_dataset(const std::string& dir, const SceneSpec& base, int count,
                                     std::int64_t seed_stride = 1) {
    if (count < 1) throw ConfigError("write_dataset: count must be >= 1");
    std::filesystem::create_directories(dir);
    DatasetManifest m;
    m.base = base;
    m.count = count;
    m.seed_stride = seed_stride;
    for (int i = 0; i < count; ++i) {
        SceneSpec spec = base;
        spec.seed = base.seed + static_cast<std::uint64_t>(i) * seed_stride;
        IntrinsicTriple t = generate_scene(spec);
        auto [redge, sedge] = derive_gt_edges(t);
        const std::string name = scene_name(i);
        m.names.push_back(name);
        const std::string stem = dir + "/" + name;
        write_pnm(stem + "_image.ppm", t.image, 16);
        write_pnm(stem + "_reflectance.ppm", t.reflectance, 16);
        write_pnm(stem + "_shading.pgm", t.shading, 16);
        write_pnm(stem + "_shadow.pgm", t.shadow_mask, 16);
        write_pnm(stem + "_redge.pgm", redge, 16);
        write_pnm(stem + "_sedge.pgm", sedge, 16);
    }
    std::ofstream out(dir + "/manifest.json", std::ios::trunc);
    if (!out) throw IoError("write_dataset: cannot write manifest in " + dir);
    out << manifest_to_json(m).dump(2) << "\n";
    return m;
}

inline DatasetManifest read_manifest(const std::string& dir) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw IoError("read_manifest: cannot open " + dir + "/manifest.json");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("read_manifest: ") + e.what());
    }
    return manifest_from_json(j);
}

inline IntrinsicTriple read_triple(const std::string& dir, const std::string& name) {
    IntrinsicTriple t;
    t.image = read_pnm(dir + "/" + name + "_image.ppm");
    t.reflectance = read_pnm(dir + "/" + name + "_reflectance.ppm");
    t.shading = read_pnm(dir + "/" + name + "_shading.pgm");
    t.shadow_mask = read_pnm(dir + "/" + name + "_shadow.pgm");
    return t;
}

// ---- evaluation over prediction/ground-truth directories ----

struct EvalOptions {
    std::string pred_refl_suffix = "_refined_R.ppm";
    std::string pred_shade_suffix = "_refined_S.pgm";
    int whdr_pairs = 0; // 0 disables the ordinal metric
    std::uint64_t whdr_seed = 1;
};

inline MetricsReport evaluate_directories(const std::string& pred_dir, const std::string& gt_dir,
                                          const EvalOptions& opt = {}) {
    DatasetManifest m = read_manifest(gt_dir);
    MetricsReport report;
    report.has_whdr = opt.whdr_pairs > 0;
    for (const std::string& name : m.names) {
        Image gt_r = read_pnm(gt_dir + "/" + name + "_reflectance.ppm");
        Image gt_s = read_pnm(gt_dir + "/" + name + "_shading.pgm");
        Image pr = read_pnm(pred_dir + "/" + name + opt.pred_refl_suffix);
        Image ps = read_pnm(pred_dir + "/" + name + opt.pred_shade_suffix);
        ImageMetrics rm{metrics::mse(pr, gt_r), metrics::smse(pr, gt_r), metrics::lmse(pr, gt_r),
                        metrics::dssim(pr, gt_r)};
        ImageMetrics sm{metrics::mse(ps, gt_s), metrics::smse(ps, gt_s), metrics::lmse(ps, gt_s),
                        metrics::dssim(ps, gt_s)};
        report.names.push_back(name);
        report.reflectance.push_back(rm);
        report.shading.push_back(sm);
        if (report.has_whdr) {
            auto judgments = metrics::synth_judgments(gt_r, opt.whdr_pairs, opt.whdr_seed);
            report.whdr.push_back(metrics::whdr(pr, judgments));
        }
    }
    report.finalize();
    return report;
}

inline nlohmann::json report_to_json(const MetricsReport& r) {
    auto metrics_json = [](const ImageMetrics& m) {
        return nlohmann::json{
            {"mse", m.mse}, {"smse", m.smse}, {"lmse", m.lmse}, {"dssim", m.dssim}};
    };
    nlohmann::json per_image = nlohmann::json::array();
    for (std::size_t i = 0; i < r.names.size(); ++i) {
        nlohmann::json entry = {{"name", r.names[i]},
                                {"reflectance", metrics_json(r.reflectance[i])},
                                {"shading", metrics_json(r.shading[i])}};
        if (r.has_whdr) entry["whdr"] = r.whdr[i];
        per_image.push_back(entry);
    }
    nlohmann::json out = {{"per_image", per_image},
                          {"mean",
                           {{"reflectance", metrics_json(r.mean_reflectance)},
                            {"shading", metrics_json(r.mean_shading)}}}};
    if (r.has_whdr) out["mean"]["whdr"] = r.mean_whdr;
    return out;
}

} // namespace dataset

} // namespace iid
