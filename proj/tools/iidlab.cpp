// iidlab: generate synthetic Lambertian scenes, inspect illumination-invariant
// descriptors, train the decomposition network, run it on images, and score
// predictions against ground truth.

#include "iid/dataset.hpp"
#include "iid/gradcheck.hpp"
#include "iid/pipeline.hpp"
#include "iid/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace iid;

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path);
    out << text;
}

int cmd_gen(const std::string& out_dir, const SceneSpec& base, int count, std::int64_t stride) {
    dataset::write_dataset(out_dir, base, count, stride);
    std::printf("wrote %d scenes to %s\n", count, out_dir.c_str());
    return 0;
}

int cmd_ccr(const std::string& image_path, const std::string& out_dir, double epsilon) {
    Image img = read_pnm(image_path);
    CcrMap map = log_ccr_map(img, epsilon);
    std::filesystem::create_directories(out_dir);
    write_ccr_raw(out_dir + "/ccr_raw.bin", map);
    // Visualization: each channel mapped through the logistic function so 0
    // (no reflectance transition) lands at mid-gray.
    static const char* kNames[6] = {"rg_right", "rb_right", "gb_right",
                                    "rg_down",  "rb_down",  "gb_down"};
    for (int ch = 0; ch < 6; ++ch) {
        Image vis(map.height, map.width, 1);
        for (int r = 0; r < map.height; ++r)
            for (int c = 0; c < map.width; ++c)
                vis.at(r, c) = 1.0 / (1.0 + std::exp(-map.at(r, c, ch)));
        write_pnm(out_dir + "/ccr_" + kNames[ch] + "_display.pgm", vis, 8);
    }
    std::printf("wrote raw dump and 6 visualization channels to %s\n", out_dir.c_str());
    return 0;
}

int cmd_edges(const std::string& image_path, const std::string& triple_dir,
              const std::string& name, const std::string& out_dir, double sigma, double low,
              double high, const std::string& rule) {
    std::filesystem::create_directories(out_dir);
    if (!image_path.empty()) {
        Image img = read_pnm(image_path);
        EdgeMap e = canny(img, sigma, low, high);
        write_pnm(out_dir + "/canny.pgm", e, 16);
        std::printf("wrote %s/canny.pgm\n", out_dir.c_str());
        return 0;
    }
    IntrinsicTriple t = dataset::read_triple(triple_dir, name);
    const ShadingEdgeRule r = rule == "image-minus-reflectance"
                                  ? ShadingEdgeRule::ImageMinusReflectance
                                  : ShadingEdgeRule::ShadingMinusReflectance;
    auto [redge, sedge] = derive_gt_edges(t, r, sigma, low, high);
    write_pnm(out_dir + "/" + name + "_redge.pgm", redge, 16);
    write_pnm(out_dir + "/" + name + "_sedge.pgm", sedge, 16);
    std::printf("wrote ground-truth edge maps for %s to %s\n", name.c_str(), out_dir.c_str());
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& checkpoint_path,
              const std::string& trace_path) {
    std::ifstream in(config_path);
    if (!in) throw IoError("cannot open config " + config_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    TrainConfig cfg = cfgio::train_from_json(j);
    TrainResult r = train(cfg);
    Checkpoint ckpt{cfg, r.params, r.adam, r.step};
    save_checkpoint(ckpt, checkpoint_path);
    if (!trace_path.empty()) write_text(trace_path, trace_to_csv(r.trace));
    std::printf("trained %d steps; loss %.6g -> %.6g; checkpoint %s\n", cfg.steps,
                r.trace.front().total, r.trace.back().total, checkpoint_path.c_str());
    return 0;
}

int cmd_decompose(const std::string& checkpoint_path, const std::string& image_path,
                  const std::string& out_dir, std::string stem) {
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    Image img = read_pnm(image_path);
    DecomposeOutputs out = decompose(ckpt.params, img);
    std::filesystem::create_directories(out_dir);
    if (stem.empty()) stem = std::filesystem::path(image_path).stem().string();
    const std::string base = out_dir + "/" + stem;

    // 16-bit linear files are the canonical outputs; the *_display files are
    // 8-bit for viewing (display gamma on reflectance, shading left linear).
    write_pnm(base + "_refined_R.ppm", out.refined_reflectance, 16);
    write_pnm(base + "_refined_S.pgm", out.refined_shading, 16);
    write_pnm(base + "_unrefined_R.ppm", out.unrefined_reflectance, 16);
    write_pnm(base + "_unrefined_S.pgm", out.unrefined_shading, 16);
    write_pnm(base + "_refined_R_display.ppm",
              gamma_convert(out.refined_reflectance, GammaDirection::ToDisplay), 8);
    write_pnm(base + "_refined_S_display.pgm", out.refined_shading, 8);
    if (out.has_edges) {
        write_pnm(base + "_redge.ppm", out.refl_edge, 16);
        write_pnm(base + "_sedge.ppm", out.shading_edge, 16);
        write_pnm(base + "_redge_half.ppm", out.refl_edge_half, 16);
        write_pnm(base + "_redge_quarter.ppm", out.refl_edge_quarter, 16);
        write_pnm(base + "_sedge_half.ppm", out.shade_edge_half, 16);
        write_pnm(base + "_sedge_quarter.ppm", out.shade_edge_quarter, 16);
    }
    std::printf("wrote decomposition of %s to %s\n", image_path.c_str(), out_dir.c_str());
    return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& out_path,
             int whdr_pairs, std::uint64_t whdr_seed) {
    dataset::EvalOptions opt;
    opt.whdr_pairs = whdr_pairs;
    opt.whdr_seed = whdr_seed;
    MetricsReport report = dataset::evaluate_directories(pred_dir, gt_dir, opt);
    const std::string text = dataset::report_to_json(report).dump(2) + "\n";
    if (!out_path.empty()) write_text(out_path, text);
    std::fputs(text.c_str(), stdout);
    return 0;
}

int cmd_manifest(const std::string& out_path) {
    const std::string text = describe_network(NetworkConfig{});
    if (!out_path.empty()) {
        write_text(out_path, text);
    } else {
        std::fputs(text.c_str(), stdout);
    }
    return 0;
}

int cmd_gradcheck() {
    bool all_pass = true;
    auto report = [&](const CheckResult& r) {
        std::printf("%-32s rel_err=%.3e tol=%.0e %s\n", r.name.c_str(), r.max_rel_err, r.tolerance,
                    r.pass ? "PASS" : "FAIL");
        all_pass = all_pass && r.pass;
    };
    for (const CheckResult& r : gradcheck::primitive_gradient_checks(1)) report(r);
    for (const CheckResult& r : gradcheck::loss_gradient_checks(2)) report(r);
    for (std::uint64_t seed : {1, 2, 3, 4, 5})
        report(gradcheck::network_directional_check(seed));
    std::printf("%s\n", all_pass ? "all gradient checks passed" : "gradient checks FAILED");
    return all_pass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale intrinsic image decomposition laboratory"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic dataset with ground truth");
    std::string gen_out = "dataset";
    SceneSpec base;
    int gen_count = 16;
    std::int64_t gen_stride = 1;
    gen->add_option("--out", gen_out, "output directory");
    gen->add_option("--seed", base.seed, "base scene seed");
    gen->add_option("--count", gen_count, "number of scenes");
    gen->add_option("--stride", gen_stride, "seed stride between scenes");
    gen->add_option("--size", base.size, "image size in pixels");
    gen->add_option("--patches", base.n_patches, "reflectance patch count");
    gen->add_option("--shading-freq", base.shading_freq, "smooth shading frequency scale");
    gen->add_option("--shadows", base.n_shadows, "cast shadow count");
    gen->add_option("--shadow-strength", base.shadow_strength, "shadow strength in (0,1]");
    gen->add_option("--penumbra", base.penumbra_px, "penumbra ramp width in pixels");

    // ccr
    auto* ccr = app.add_subcommand("ccr", "compute the log cross-ratio field for an image");
    std::string ccr_image, ccr_out = "ccr_out";
    double ccr_eps = kCcrEpsilon;
    ccr->add_option("--image", ccr_image, "input image (binary PGM/PPM)")->required();
    ccr->add_option("--out", ccr_out, "output directory");
    ccr->add_option("--epsilon", ccr_eps, "clamp before the logarithm");

    // edges
    auto* edges = app.add_subcommand("edges", "Canny edges or ground-truth edge maps");
    std::string edges_image, edges_triple_dir, edges_name, edges_out = "edges_out";
    double edge_sigma = 1.0, edge_low = 0.1, edge_high = 0.2;
    std::string edge_rule = "shading-minus-reflectance";
    edges->add_option("--image", edges_image, "single image for Canny edges");
    edges->add_option("--dataset", edges_triple_dir, "dataset directory holding a triple");
    edges->add_option("--name", edges_name, "scene name inside --dataset");
    edges->add_option("--out", edges_out, "output directory");
    edges->add_option("--sigma", edge_sigma, "Gaussian blur sigma");
    edges->add_option("--low", edge_low, "low threshold (relative)");
    edges->add_option("--high", edge_high, "high threshold (relative)");
    edges->add_option("--rule", edge_rule,
                      "shading-minus-reflectance | image-minus-reflectance");

    // train
    auto* train_cmd = app.add_subcommand("train", "train from a JSON config file");
    std::string train_config, train_ckpt = "checkpoint.pief", train_trace = "";
    train_cmd->add_option("--config", train_config, "JSON config file")->required();
    train_cmd->add_option("--checkpoint", train_ckpt, "checkpoint output path");
    train_cmd->add_option("--trace", train_trace, "loss-trace CSV output path");

    // decompose
    auto* dec = app.add_subcommand("decompose", "run a checkpoint on an image");
    std::string dec_ckpt, dec_image, dec_out = "decomposed", dec_stem;
    dec->add_option("--checkpoint", dec_ckpt, "checkpoint file")->required();
    dec->add_option("--image", dec_image, "input image (binary PPM)")->required();
    dec->add_option("--out", dec_out, "output directory");
    dec->add_option("--stem", dec_stem, "output file stem (default: image stem)");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "score predictions against ground truth");
    std::string eval_pred, eval_gt, eval_out;
    int eval_whdr_pairs = 0;
    std::uint64_t eval_whdr_seed = 1;
    eval_cmd->add_option("--pred", eval_pred, "prediction directory")->required();
    eval_cmd->add_option("--gt", eval_gt, "ground-truth dataset directory")->required();
    eval_cmd->add_option("--out", eval_out, "report output path (JSON)");
    eval_cmd->add_option("--whdr-pairs", eval_whdr_pairs,
                         "ordinal judgments per scene (0 disables)");
    eval_cmd->add_option("--whdr-seed", eval_whdr_seed, "judgment sampling seed");

    // manifest
    auto* man = app.add_subcommand("manifest", "print the default layer manifest");
    std::string man_out;
    man->add_option("--out", man_out, "write to file instead of stdout");

    // gradcheck
    app.add_subcommand("gradcheck", "run the full finite-difference suite");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen(gen_out, base, gen_count, gen_stride);
        if (ccr->parsed()) return cmd_ccr(ccr_image, ccr_out, ccr_eps);
        if (edges->parsed()) {
            if (edges_image.empty() && (edges_triple_dir.empty() || edges_name.empty()))
                throw ConfigError("edges: pass --image, or --dataset with --name");
            return cmd_edges(edges_image, edges_triple_dir, edges_name, edges_out, edge_sigma,
                             edge_low, edge_high, edge_rule);
        }
        if (train_cmd->parsed()) return cmd_train(train_config, train_ckpt, train_trace);
        if (dec->parsed()) return cmd_decompose(dec_ckpt, dec_image, dec_out, dec_stem);
        if (eval_cmd->parsed()) return cmd_eval(eval_pred, eval_gt, eval_out, eval_whdr_pairs,
                                                eval_whdr_seed);
        if (man->parsed()) return cmd_manifest(man_out);
        if (app.get_subcommand("gradcheck")->parsed()) return cmd_gradcheck();
    } catch (const iid::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
