#include "jumpcut/puppet.hpp"

#include <algorithm>
#include <cmath>

namespace jcut {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Vec2 {
    double x, y;
};

Vec2 limb_dir(double deg) {
    const double rad = deg * kPi / 180.0;
    return {std::sin(rad), std::cos(rad)};  // straight down at 0 degrees
}

// Continuous part geometry for one (spec, pose) pair. All UV maps are linear
// in image coordinates (up to endpoint clamping), so per-cell means land on
// the analytic surface point of the mean coordinate.
struct Layout {
    int size;
    double torso_cx, torso_cy, torso_hw, torso_hh;
    double head_cx, head_cy, head_hh, head_hw;
    double yaw;
    Vec2 shoulder_l, shoulder_r, elbow_l, elbow_r, wrist_l, wrist_r;
    double upper_hw, lower_hw, hand_r;
};

Layout make_layout(const PuppetSpec& spec, const PuppetPose& pose) {
    Layout L;
    L.size = spec.canvas;
    const double k = spec.canvas / 64.0;
    const double tx = pose.tx * k, ty = pose.ty * k;
    L.torso_cx = 32 * k + tx;
    L.torso_cy = 46 * k + ty;
    L.torso_hw = 13 * k;
    L.torso_hh = 16 * k;
    L.head_cx = 32 * k + tx;
    L.head_cy = 18 * k + ty;
    L.head_hh = 11 * k;
    L.yaw = pose.yaw;
    const double head_r = 9 * k;
    L.head_hw = head_r * (0.5 + 0.5 * std::cos(pose.yaw * kPi / 180.0));
    L.shoulder_l = {L.torso_cx - L.torso_hw + 1 * k, L.torso_cy - L.torso_hh + 2 * k};
    L.shoulder_r = {L.torso_cx + L.torso_hw - 1 * k, L.torso_cy - L.torso_hh + 2 * k};
    const double upper_len = 10 * k, lower_len = 9 * k;
    L.upper_hw = 2.5 * k;
    L.lower_hw = 2.0 * k;
    L.hand_r = 3.0 * k;
    const Vec2 dl = limb_dir(pose.shoulder_l);
    L.elbow_l = {L.shoulder_l.x + upper_len * dl.x, L.shoulder_l.y + upper_len * dl.y};
    const Vec2 dll = limb_dir(pose.shoulder_l + pose.elbow_l);
    L.wrist_l = {L.elbow_l.x + lower_len * dll.x, L.elbow_l.y + lower_len * dll.y};
    const Vec2 dr = limb_dir(pose.shoulder_r);
    L.elbow_r = {L.shoulder_r.x + upper_len * dr.x, L.shoulder_r.y + upper_len * dr.y};
    const Vec2 drr = limb_dir(pose.shoulder_r + pose.elbow_r);
    L.wrist_r = {L.elbow_r.x + lower_len * drr.x, L.elbow_r.y + lower_len * drr.y};
    return L;
}

bool rect_uv(double x, double y, double cx, double cy, double hw, double hh, double* u, double* v) {
    if (x < cx - hw || x > cx + hw || y < cy - hh || y > cy + hh) return false;
    *u = (x - (cx - hw)) / (2 * hw);
    *v = (y - (cy - hh)) / (2 * hh);
    return true;
}

bool capsule_uv(double x, double y, Vec2 p0, Vec2 p1, double hw, double* u, double* v) {
    const double dx = p1.x - p0.x, dy = p1.y - p0.y;
    const double len2 = dx * dx + dy * dy;
    const double t = std::clamp(((x - p0.x) * dx + (y - p0.y) * dy) / len2, 0.0, 1.0);
    const double px = p0.x + t * dx, py = p0.y + t * dy;
    const double ddx = x - px, ddy = y - py;
    if (ddx * ddx + ddy * ddy > hw * hw) return false;
    const double cross = (dx * (y - p0.y) - dy * (x - p0.x)) / std::sqrt(len2);
    *u = t;
    *v = std::clamp(0.5 + cross / (2 * hw), 0.0, 1.0);
    return true;
}

bool disc_uv(double x, double y, Vec2 c, double r, double* u, double* v) {
    const double dx = x - c.x, dy = y - c.y;
    if (dx * dx + dy * dy > r * r) return false;
    *u = 0.5 + dx / (2 * r);
    *v = 0.5 + dy / (2 * r);
    return true;
}

bool layout_uv(const Layout& L, int part, double x, double y, double* u, double* v) {
    switch (part) {
        case kTorso:
            return rect_uv(x, y, L.torso_cx, L.torso_cy, L.torso_hw, L.torso_hh, u, v);
        case kHead: {
            if (x < L.head_cx - L.head_hw || x > L.head_cx + L.head_hw ||
                y < L.head_cy - L.head_hh || y > L.head_cy + L.head_hh)
                return false;
            // visible strip covers surface angles yaw-90..yaw+90; u maps the
            // full -180..180 sweep so texture slides and foreshortens with yaw
            const double theta = L.yaw + 90.0 * (x - L.head_cx) / L.head_hw;
            *u = std::clamp((theta + 180.0) / 360.0, 0.0, 1.0);
            *v = (y - (L.head_cy - L.head_hh)) / (2 * L.head_hh);
            return true;
        }
        case kUpperArmL:
            return capsule_uv(x, y, L.shoulder_l, L.elbow_l, L.upper_hw, u, v);
        case kUpperArmR:
            return capsule_uv(x, y, L.shoulder_r, L.elbow_r, L.upper_hw, u, v);
        case kLowerArmL:
            return capsule_uv(x, y, L.elbow_l, L.wrist_l, L.lower_hw, u, v);
        case kLowerArmR:
            return capsule_uv(x, y, L.elbow_r, L.wrist_r, L.lower_hw, u, v);
        case kHandL:
            return disc_uv(x, y, L.wrist_l, L.hand_r, u, v);
        case kHandR:
            return disc_uv(x, y, L.wrist_r, L.hand_r, u, v);
        default:
            return false;
    }
}

struct PartPalette {
    float base[8][3];
    float grad_u[8][3];
    float grad_v[8][3];
    double freq_u[8], freq_v[8], phase[8];
};

PartPalette make_palette(uint64_t seed) {
    Rng rng(seed);
    PartPalette pal{};
    for (int p = 0; p < 8; ++p) {
        uint64_t c = static_cast<uint64_t>(p) * 32;
        for (int ch = 0; ch < 3; ++ch) {
            pal.base[p][ch] = static_cast<float>(0.30 + 0.45 * rng.uniform(11, c++));
            pal.grad_u[p][ch] = static_cast<float>(0.35 * (rng.uniform(11, c++) - 0.5));
            pal.grad_v[p][ch] = static_cast<float>(0.35 * (rng.uniform(11, c++) - 0.5));
        }
        pal.freq_u[p] = 2.0 + rng.below(12, p * 3, 3);
        pal.freq_v[p] = 2.0 + rng.below(12, p * 3 + 1, 3);
        pal.phase[p] = 2.0 * kPi * rng.uniform(12, p * 3 + 2);
    }
    return pal;
}

float face_mask(double u, double v) {
    // darker features painted in surface coordinates: eyes, mouth, nose line
    auto blob = [](double u, double v, double cu, double cv, double ru, double rv) {
        const double du = (u - cu) / ru, dv = (v - cv) / rv;
        const double d = du * du + dv * dv;
        return d < 1.0 ? 1.0 - d : 0.0;
    };
    double m = 0;
    m = std::max(m, blob(u, v, 0.444, 0.40, 0.03, 0.06));
    m = std::max(m, blob(u, v, 0.556, 0.40, 0.03, 0.06));
    m = std::max(m, blob(u, v, 0.5, 0.68, 0.05, 0.045));
    m = std::max(m, 0.6 * blob(u, v, 0.5, 0.52, 0.018, 0.10));
    return static_cast<float>(m);
}

void shade(const PartPalette& pal, int part, double u, double v, float rgb[3]) {
    const int p = part - 1;
    const float wave =
        static_cast<float>(0.5 + 0.5 * std::sin(2 * kPi * (pal.freq_u[p] * u + pal.freq_v[p] * v) +
                                                pal.phase[p]));
    for (int ch = 0; ch < 3; ++ch) {
        float c = pal.base[p][ch] + pal.grad_u[p][ch] * static_cast<float>(u - 0.5) +
                  pal.grad_v[p][ch] * static_cast<float>(v - 0.5) + 0.12f * (wave - 0.5f);
        rgb[ch] = std::clamp(c, 0.02f, 0.98f);
    }
    if (part == kHead) {
        const float fm = face_mask(u, v);
        for (int ch = 0; ch < 3; ++ch) rgb[ch] = rgb[ch] * (1.f - 0.8f * fm) + 0.05f * fm;
    }
}

}  // namespace

bool puppet_analytic_uv(const PuppetSpec& spec, const PuppetPose& pose, int part, double x,
                        double y, double* u, double* v) {
    return layout_uv(make_layout(spec, pose), part, x, y, u, v);
}

RenderResult render_puppet(const PuppetSpec& spec, const PuppetPose& pose) {
    const Layout L = make_layout(spec, pose);
    const int size = L.size;

    const double body_left = std::min(L.head_cx - L.head_hw, L.torso_cx - L.torso_hw);
    const double body_right = std::max(L.head_cx + L.head_hw, L.torso_cx + L.torso_hw);
    const double body_top = L.head_cy - L.head_hh;
    const double body_bottom = L.torso_cy + L.torso_hh;
    if (body_right < 0 || body_left > size - 1 || body_bottom < 0 || body_top > size - 1)
        throw DomainError("render_puppet: pose places the puppet fully off-canvas");

    const PartPalette pal = make_palette(spec.texture_seed);

    RenderResult out;
    out.image = Image(size, size);
    out.dpose.width = size;
    out.dpose.height = size;
    out.dpose.part.assign(static_cast<size_t>(size) * size, 0);
    out.dpose.u.assign(out.dpose.part.size(), 0.f);
    out.dpose.v.assign(out.dpose.part.size(), 0.f);

    // static background
    {
        Rng rng(spec.background_seed);
        const double f1 = 1.0 + rng.below(1, 0, 2), f2 = 1.0 + rng.below(1, 1, 2);
        const double ph1 = 2 * kPi * rng.uniform(2, 0), ph2 = 2 * kPi * rng.uniform(2, 1);
        float base[3];
        for (int ch = 0; ch < 3; ++ch)
            base[ch] = static_cast<float>(0.55 + 0.25 * rng.uniform(3, ch));
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const float wx = static_cast<float>(0.08 * std::sin(2 * kPi * f1 * x / size + ph1));
                const float wy = static_cast<float>(0.08 * std::sin(2 * kPi * f2 * y / size + ph2));
                out.image.at(0, x, y) = std::clamp(base[0] + wx + wy, 0.f, 1.f);
                out.image.at(1, x, y) = std::clamp(base[1] + wx - wy, 0.f, 1.f);
                out.image.at(2, x, y) = std::clamp(base[2] - wx + wy, 0.f, 1.f);
            }
    }

    // z-order: torso, arms, hands, head in front
    const int draw_order[] = {kTorso,     kUpperArmL, kUpperArmR, kLowerArmL,
                              kLowerArmR, kHandL,     kHandR,     kHead};
    for (int part : draw_order) {
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                double u, v;
                if (!layout_uv(L, part, x, y, &u, &v)) continue;
                const size_t i = static_cast<size_t>(y) * size + x;
                out.dpose.part[i] = part;
                out.dpose.u[i] = static_cast<float>(u);
                out.dpose.v[i] = static_cast<float>(v);
                float rgb[3];
                shade(pal, part, u, v, rgb);
                out.image.at(0, x, y) = rgb[0];
                out.image.at(1, x, y) = rgb[1];
                out.image.at(2, x, y) = rgb[2];
            }
    }

    // landmarks: fixed anchors on the head surface, 17 angles x 4 rows
    for (int i = 0; i < kLandmarkCount; ++i) {
        const double theta_a = -55.0 + 110.0 * (i % 17) / 16.0;
        const double va = 0.25 + 0.55 * (i / 17) / 3.0;
        Landmark& lm = out.landmarks.points[i];
        const double delta = theta_a - pose.yaw;
        if (std::abs(delta) >= 85.0) continue;  // rotated out of view
        const double lx = L.head_cx + (delta / 90.0) * L.head_hw;
        const double ly = (L.head_cy - L.head_hh) + va * (2 * L.head_hh);
        if (lx < 0 || lx > size - 1 || ly < 0 || ly > size - 1) continue;
        lm.visible = true;
        lm.x = static_cast<float>(lx);
        lm.y = static_cast<float>(ly);
    }
    return out;
}

std::vector<MotionScript> default_scripts(int frames_per_script, uint64_t seed) {
    const int N = frames_per_script;
    Rng rng(seed);
    std::vector<MotionScript> scripts;
    auto lin = [&](double a, double b, int t) { return a + (b - a) * t / std::max(1, N - 1); };

    auto make = [&](const std::string& name, auto fn) {
        MotionScript s;
        s.name = name;
        s.poses.reserve(N);
        for (int t = 0; t < N; ++t) s.poses.push_back(fn(t));
        scripts.push_back(std::move(s));
    };

    make("yaw_sweep_left_right", [&](int t) {
        PuppetPose p;
        p.yaw = lin(-60, 60, t);
        return p;
    });
    make("yaw_sweep_right_left", [&](int t) {
        PuppetPose p;
        p.yaw = lin(60, -60, t);
        p.ty = 1.5 * std::sin(2 * kPi * t / 60.0);
        return p;
    });
    make("yaw_sweep_wide", [&](int t) {
        PuppetPose p;
        p.yaw = lin(-75, 75, t);
        p.tx = 2.0 * std::sin(2 * kPi * t / 80.0);
        return p;
    });
    make("yaw_sweep_osc", [&](int t) {
        PuppetPose p;
        p.yaw = 55.0 * std::sin(2 * kPi * t / static_cast<double>(N));
        return p;
    });
    make("translate_circle", [&](int t) {
        PuppetPose p;
        p.tx = 3.0 * std::cos(2 * kPi * t / static_cast<double>(N));
        p.ty = 2.0 * std::sin(2 * kPi * t / static_cast<double>(N));
        p.yaw = 10.0 * std::sin(2 * kPi * t / 50.0);
        return p;
    });
    make("bob_nod", [&](int t) {
        PuppetPose p;
        p.ty = 2.5 * std::sin(2 * kPi * t / 40.0);
        p.yaw = 15.0 * std::sin(2 * kPi * t / 90.0);
        return p;
    });
    make("arm_wave", [&](int t) {
        PuppetPose p;
        p.shoulder_r = 25 + 35 * std::sin(2 * kPi * t / 60.0);
        p.elbow_r = 15 + 30 * std::sin(2 * kPi * t / 35.0);
        return p;
    });
    make("arms_and_yaw", [&](int t) {
        PuppetPose p;
        p.yaw = lin(-45, 45, t);
        p.shoulder_l = -25 - 25 * std::sin(2 * kPi * t / 70.0);
        p.elbow_l = -15 - 20 * std::sin(2 * kPi * t / 45.0);
        return p;
    });
    (void)rng;
    return scripts;
}

}  // namespace jcut
