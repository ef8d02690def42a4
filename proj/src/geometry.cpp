#include "jumpcut/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace jcut {

KeypointSet quantize_densepose(const DensePoseMap& dp, int n) {
    if (n < 1) throw DomainError("quantize_densepose: n must be >= 1");
    const size_t npx = static_cast<size_t>(dp.width) * dp.height;
    if (dp.part.size() != npx || dp.u.size() != npx || dp.v.size() != npx)
        throw InvalidInput("quantize_densepose: part/uv grid dimension mismatch");

    KeypointSet out(n);
    std::vector<double> sx(out.slots.size(), 0.0), sy(out.slots.size(), 0.0),
        su(out.slots.size(), 0.0), sv(out.slots.size(), 0.0);
    std::vector<int64_t> cnt(out.slots.size(), 0);

    for (int y = 0; y < dp.height; ++y) {
        for (int x = 0; x < dp.width; ++x) {
            const size_t i = static_cast<size_t>(y) * dp.width + x;
            const int p = dp.part[i];
            if (p <= 0) continue;
            const int a = uv_cell(dp.u[i], n);
            const int b = uv_cell(dp.v[i], n);
            const int s = out.slot_index(p, a, b);
            sx[s] += x;
            sy[s] += y;
            su[s] += dp.u[i];
            sv[s] += dp.v[i];
            ++cnt[s];
        }
    }
    for (size_t s = 0; s < out.slots.size(); ++s) {
        if (cnt[s] == 0) continue;
        Slot& sl = out.slots[s];
        sl.visible = true;
        sl.x = static_cast<float>(sx[s] / cnt[s]);
        sl.y = static_cast<float>(sy[s] / cnt[s]);
        sl.u = static_cast<float>(su[s] / cnt[s]);
        sl.v = static_cast<float>(sv[s] / cnt[s]);
    }
    return out;
}

DiscretizedIUV splat_keypoints(const KeypointSet& kps, int width, int height) {
    DiscretizedIUV out(width, height);
    for (int i = 0; i < kps.num_slots(); ++i) {
        const Slot& sl = kps.slots[i];
        if (!sl.visible) continue;
        int px = static_cast<int>(std::lround(sl.x));
        int py = static_cast<int>(std::lround(sl.y));
        px = std::clamp(px, 0, width - 1);
        py = std::clamp(py, 0, height - 1);
        const int p = kps.slot_part(i);
        out.at(0, px, py) = static_cast<float>(p) / kParts;
        out.at(1, px, py) = sl.u;
        out.at(2, px, py) = sl.v;
    }
    return out;
}

HeatmapStack landmark_heatmaps(const LandmarkSet& lm, double sigma, int width, int height) {
    if (sigma <= 0) throw DomainError("landmark_heatmaps: sigma must be positive");
    HeatmapStack out(width, height);
    const double r2 = 9.0 * sigma * sigma;  // truncate beyond 3 sigma
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (int c = 0; c < kLandmarkCount; ++c) {
        const Landmark& p = lm.points[c];
        if (!p.visible) continue;
        const int x0 = std::max(0, static_cast<int>(std::floor(p.x - 3 * sigma)));
        const int x1 = std::min(width - 1, static_cast<int>(std::ceil(p.x + 3 * sigma)));
        const int y0 = std::max(0, static_cast<int>(std::floor(p.y - 3 * sigma)));
        const int y1 = std::min(height - 1, static_cast<int>(std::ceil(p.y + 3 * sigma)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double dx = x - static_cast<double>(p.x);
                const double dy = y - static_cast<double>(p.y);
                const double d2 = dx * dx + dy * dy;
                if (d2 > r2) continue;
                out.at(c, x, y) = static_cast<float>(std::exp(-d2 * inv));
            }
        }
    }
    return out;
}

std::vector<uint8_t> visibility_intersection(const std::vector<const KeypointSet*>& sets) {
    if (sets.empty()) throw InvalidInput("visibility_intersection: no input sets");
    const int n = sets[0]->n, parts = sets[0]->parts;
    for (const auto* s : sets)
        if (s->n != n || s->parts != parts)
            throw InvalidInput("visibility_intersection: mismatched (P, n)");
    std::vector<uint8_t> flags(sets[0]->slots.size(), 1);
    for (const auto* s : sets)
        for (size_t i = 0; i < flags.size(); ++i)
            if (!s->slots[i].visible) flags[i] = 0;
    return flags;
}

}  // namespace jcut
