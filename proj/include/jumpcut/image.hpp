#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "jumpcut/common.hpp"

namespace jcut {

// Planar RGB float image, channels-first, values in [0,1].
struct Image {
    int width = 0;
    int height = 0;
    std::vector<float> data;  // [3, height, width]

    Image() = default;
    Image(int w, int h) : width(w), height(h), data(3ull * w * h, 0.f) {}

    float& at(int c, int x, int y) { return data[(static_cast<size_t>(c) * height + y) * width + x]; }
    float at(int c, int x, int y) const {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
};

Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);
// Area interpolation when shrinking, bilinear when enlarging.
Image resize_image(const Image& img, int width, int height);

}  // namespace jcut
