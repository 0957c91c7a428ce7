#pragma once

#include "iid/ccr.hpp"
#include "iid/image.hpp"
#include "iid/tensor.hpp"

#include <vector>

namespace iid {

// HWC images to a batched CHW tensor.
inline Tensor batch_to_tensor(const std::vector<const Image*>& images) {
    if (images.empty()) throw ShapeError("batch_to_tensor: empty batch");
    const Image& first = *images[0];
    Tensor t({static_cast<int>(images.size()), first.channels, first.height, first.width});
    const std::size_t hw = static_cast<std::size_t>(first.height) * first.width;
    for (std::size_t b = 0; b < images.size(); ++b) {
        const Image& img = *images[b];
        if (!img.same_dims(first)) throw ShapeError("batch_to_tensor: mixed dimensions");
        for (int c = 0; c < img.channels; ++c)
            for (std::size_t p = 0; p < hw; ++p)
                t.data[(b * img.channels + c) * hw + p] = img.data[p * img.channels + c];
    }
    return t;
}

inline Tensor image_to_tensor(const Image& img) { return batch_to_tensor({&img}); }

// One batch element of a CHW tensor back to an HWC image.
inline Image tensor_to_image(const Tensor& t, int batch_index = 0) {
    if (t.shape.size() != 4) throw ShapeError("tensor_to_image: expect 4-D tensor");
    const int C = t.dim(1), H = t.dim(2), W = t.dim(3);
    if (batch_index < 0 || batch_index >= t.dim(0))
        throw ShapeError("tensor_to_image: batch index out of range");
    Image img(H, W, C == 1 ? 1 : 3);
    if (C != 1 && C != 3) throw ShapeError("tensor_to_image: expect 1 or 3 channels");
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    for (int c = 0; c < C; ++c)
        for (std::size_t p = 0; p < hw; ++p)
            img.data[p * C + c] = t.data[(static_cast<std::size_t>(batch_index) * C + c) * hw + p];
    return img;
}

// 6-channel descriptor field to CHW, batched.
inline Tensor batch_ccr_to_tensor(const std::vector<const CcrMap*>& maps) {
    if (maps.empty()) throw ShapeError("batch_ccr_to_tensor: empty batch");
    const CcrMap& first = *maps[0];
    Tensor t({static_cast<int>(maps.size()), 6, first.height, first.width});
    const std::size_t hw = static_cast<std::size_t>(first.height) * first.width;
    for (std::size_t b = 0; b < maps.size(); ++b) {
        const CcrMap& m = *maps[b];
        if (m.height != first.height || m.width != first.width)
            throw ShapeError("batch_ccr_to_tensor: mixed dimensions");
        for (int c = 0; c < 6; ++c)
            for (std::size_t p = 0; p < hw; ++p) t.data[(b * 6 + c) * hw + p] = m.data[p * 6 + c];
    }
    return t;
}

} // namespace iid
