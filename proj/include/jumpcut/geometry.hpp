#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "jumpcut/common.hpp"

namespace jcut {

constexpr int kParts = 14;
constexpr int kLandmarkCount = 68;

// Per-pixel body-part index (0 = background) with continuous UV coordinates.
struct DensePoseMap {
    int width = 0;
    int height = 0;
    std::vector<int> part;  // row-major y*width+x, values in 0..kParts
    std::vector<float> u;   // defined where part > 0
    std::vector<float> v;

    int at(int x, int y) const { return part[static_cast<size_t>(y) * width + x]; }
};

struct Slot {
    bool visible = false;
    float x = 0, y = 0, u = 0, v = 0;
};

// Quantized keypoints: one slot per (part, u-cell, v-cell).
struct KeypointSet {
    int n = 0;
    int parts = kParts;
    std::vector<Slot> slots;

    KeypointSet() = default;
    explicit KeypointSet(int cells)
        : n(cells), slots(static_cast<size_t>(kParts) * cells * cells) {}

    int num_slots() const { return static_cast<int>(slots.size()); }
    // canonical index for part p (1-based), u-cell a, v-cell b
    int slot_index(int p, int a, int b) const { return ((p - 1) * n + a) * n + b; }
    int slot_part(int idx) const { return idx / (n * n) + 1; }
    int slot_cell_a(int idx) const { return (idx / n) % n; }
    int slot_cell_b(int idx) const { return idx % n; }
};

struct Landmark {
    float x = 0, y = 0;
    bool visible = false;
};

struct LandmarkSet {
    std::array<Landmark, kLandmarkCount> points{};
};

// 3 planar channels (part index / kParts, U, V); zero where nothing splatted.
struct DiscretizedIUV {
    int width = 0;
    int height = 0;
    std::vector<float> data;  // [3, height, width]

    DiscretizedIUV() = default;
    DiscretizedIUV(int w, int h) : width(w), height(h), data(3ull * w * h, 0.f) {}
    float& at(int c, int x, int y) { return data[(static_cast<size_t>(c) * height + y) * width + x]; }
    float at(int c, int x, int y) const {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
};

// 68 planar channels of peak-normalized Gaussians.
struct HeatmapStack {
    int width = 0;
    int height = 0;
    std::vector<float> data;  // [68, height, width]

    HeatmapStack() = default;
    HeatmapStack(int w, int h) : width(w), height(h), data(68ull * w * h, 0.f) {}
    float& at(int c, int x, int y) { return data[(static_cast<size_t>(c) * height + y) * width + x]; }
    float at(int c, int x, int y) const {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
};

// Bin a UV coordinate: floor(u*n) with the top edge folded into the last cell.
inline int uv_cell(float u, int n) {
    int c = static_cast<int>(u * n);
    return c >= n ? n - 1 : c;
}

KeypointSet quantize_densepose(const DensePoseMap& dp, int n);
DiscretizedIUV splat_keypoints(const KeypointSet& kps, int width, int height);
HeatmapStack landmark_heatmaps(const LandmarkSet& lm, double sigma, int width, int height);
std::vector<uint8_t> visibility_intersection(const std::vector<const KeypointSet*>& sets);

inline double default_heatmap_sigma(int height) { return 2.0 * height / 256.0; }

}  // namespace jcut
