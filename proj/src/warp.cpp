#include "jumpcut/warp.hpp"

#include <algorithm>

namespace jcut::warp {

namespace {

void check_same_size(int aw, int ah, int bw, int bh, const char* what) {
    if (aw != bw || ah != bh) throw InvalidInput(std::string(what) + ": spatial size mismatch");
}

void append_image_pm1(const Image& img, std::vector<float>& out) {
    for (float v : img.data) out.push_back(2.f * v - 1.f);
}

}  // namespace

TensorT<float> build_query_input(const DiscretizedIUV& iuv, const HeatmapStack& heat) {
    check_same_size(iuv.width, iuv.height, heat.width, heat.height, "build_query_input");
    TensorT<float> t({3 + kLandmarkCount, iuv.height, iuv.width});
    auto it = std::copy(iuv.data.begin(), iuv.data.end(), t.data.begin());
    std::copy(heat.data.begin(), heat.data.end(), it);
    return t;
}

TensorT<float> build_key_input(const DiscretizedIUV& iuv, const HeatmapStack& heat,
                               const Image& img) {
    check_same_size(iuv.width, iuv.height, heat.width, heat.height, "build_key_input");
    check_same_size(iuv.width, iuv.height, img.width, img.height, "build_key_input");
    TensorT<float> t({3 + kLandmarkCount + 3, iuv.height, iuv.width});
    t.data.clear();
    t.data.insert(t.data.end(), iuv.data.begin(), iuv.data.end());
    t.data.insert(t.data.end(), heat.data.begin(), heat.data.end());
    t.data.reserve(t.numel());
    append_image_pm1(img, t.data);
    return t;
}

TensorT<float> build_value_input(const Image& img) {
    TensorT<float> t({3, img.height, img.width});
    t.data.clear();
    t.data.reserve(t.numel());
    append_image_pm1(img, t.data);
    return t;
}

TensorT<float> stack_batch(const std::vector<TensorT<float>>& samples) {
    if (samples.empty()) throw InvalidInput("stack_batch: empty batch");
    std::vector<int64_t> shape = samples[0].shape;
    shape.insert(shape.begin(), static_cast<int64_t>(samples.size()));
    TensorT<float> out(shape);
    auto it = out.data.begin();
    for (const auto& s : samples) {
        if (s.shape != samples[0].shape) throw InvalidInput("stack_batch: shape mismatch");
        it = std::copy(s.data.begin(), s.data.end(), it);
    }
    return out;
}

}  // namespace jcut::warp
