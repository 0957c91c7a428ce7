#pragma once

#include "iid/bridge.hpp"
#include "iid/ccr.hpp"
#include "iid/edges.hpp"
#include "iid/network.hpp"

#include <optional>

namespace iid {

// Builds the descriptor-encoder input for one image per the configured
// ablations: the 6-channel log-ratio field, a 1-channel edge map, or
// nothing when that encoder is disabled.
inline std::optional<Tensor> make_guide(const NetworkConfig& config, const Image& image) {
    if (config.ablations.no_ccr_encoder) return std::nullopt;
    if (config.ablations.canny_input) {
        Image edges = canny(luminance(image));
        return image_to_tensor(edges);
    }
    CcrMap map = log_ccr_map(image);
    std::vector<const CcrMap*> ptr = {&map};
    return batch_ccr_to_tensor(ptr);
}

struct DecomposeOutputs {
    Image refined_reflectance;   // 3ch linear
    Image refined_shading;       // 1ch linear
    Image unrefined_reflectance;
    Image unrefined_shading;
    bool has_edges = false;
    Image refl_edge, shading_edge;            // 3ch
    Image refl_edge_half, refl_edge_quarter;
    Image shade_edge_half, shade_edge_quarter;
};

// Single-image inference in eval mode (batch-norm running statistics).
inline DecomposeOutputs decompose(NetworkParams& params, const Image& image) {
    std::optional<Tensor> guide = make_guide(params.config, image);
    Tensor input = image_to_tensor(image);
    Tape tape;
    ForwardResult fr = forward(tape, params, input, guide ? &*guide : nullptr, ad::BnMode::Eval);
    const ForwardBundle& b = fr.bundle;
    DecomposeOutputs out;
    out.refined_reflectance = tensor_to_image(b.refined_reflectance.value());
    out.refined_shading = tensor_to_image(b.refined_shading.value());
    out.unrefined_reflectance = tensor_to_image(b.unrefined_reflectance.value());
    out.unrefined_shading = tensor_to_image(b.unrefined_shading.value());
    out.has_edges = b.has_edges;
    if (b.has_edges) {
        out.refl_edge = tensor_to_image(b.refl_edge.value());
        out.shading_edge = tensor_to_image(b.shading_edge.value());
        out.refl_edge_half = tensor_to_image(b.refl_edge_half.value());
        out.refl_edge_quarter = tensor_to_image(b.refl_edge_quarter.value());
        out.shade_edge_half = tensor_to_image(b.shade_edge_half.value());
        out.shade_edge_quarter = tensor_to_image(b.shade_edge_quarter.value());
    }
    return out;
}

} // namespace iid
