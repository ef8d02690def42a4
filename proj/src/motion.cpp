#include "jumpcut/motion.hpp"

#include <algorithm>

namespace jcut {

TransitionMode parse_mode(const std::string& s) {
    if (s == "insert") return TransitionMode::Insert;
    if (s == "blend") return TransitionMode::Blend;
    throw UsageError("unknown mode '" + s + "' (expected insert or blend)");
}

std::string mode_name(TransitionMode m) {
    return m == TransitionMode::Insert ? "insert" : "blend";
}

KeypointSet interpolate_keypoints(const KeypointSet& A, const KeypointSet& B, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw DomainError("interpolate_keypoints: alpha outside [0,1]");
    if (A.n != B.n || A.parts != B.parts)
        throw InvalidInput("interpolate_keypoints: mismatched (P, n)");
    KeypointSet out(A.n);
    for (size_t i = 0; i < out.slots.size(); ++i) {
        const Slot& a = A.slots[i];
        const Slot& b = B.slots[i];
        if (!a.visible || !b.visible) continue;
        Slot& o = out.slots[i];
        o.visible = true;
        const float w = static_cast<float>(alpha);
        o.x = (1.f - w) * a.x + w * b.x;
        o.y = (1.f - w) * a.y + w * b.y;
        o.u = (1.f - w) * a.u + w * b.u;
        o.v = (1.f - w) * a.v + w * b.v;
    }
    return out;
}

LandmarkSet interpolate_landmarks(const LandmarkSet& A, const LandmarkSet& B, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw DomainError("interpolate_landmarks: alpha outside [0,1]");
    LandmarkSet out;
    for (int i = 0; i < kLandmarkCount; ++i) {
        const Landmark& a = A.points[i];
        const Landmark& b = B.points[i];
        if (!a.visible || !b.visible) continue;
        Landmark& o = out.points[i];
        o.visible = true;
        const float w = static_cast<float>(alpha);
        o.x = (1.f - w) * a.x + w * b.x;
        o.y = (1.f - w) * a.y + w * b.y;
    }
    return out;
}

std::vector<double> insertion_schedule(int T) {
    if (T < 0) throw DomainError("insertion_schedule: negative T");
    std::vector<double> alphas;
    alphas.reserve(T);
    for (int t = 1; t <= T; ++t) alphas.push_back(static_cast<double>(t) / (T + 1));
    return alphas;
}

std::pair<std::vector<double>, std::vector<double>> blended_schedule(int H) {
    if (H < 1) throw DomainError("blended_schedule: H must be >= 1");
    std::vector<double> pre, post;
    for (int i = 0; i <= H; ++i) pre.push_back(static_cast<double>(i) / (2 * H));
    for (int j = 0; j <= H; ++j) post.push_back(0.5 + static_cast<double>(j) / (2 * H));
    return {pre, post};
}

std::vector<OrderStep> recursive_order(int T) {
    if (T < 0) throw DomainError("recursive_order: negative T");
    std::vector<OrderStep> steps;
    int left = 1, right = T;
    while (left <= right) {
        steps.push_back({left, left - 1, T + 2 - left});
        if (right > left) steps.push_back({right, right + 1, T - right});
        ++left;
        --right;
    }
    return steps;
}

TransitionPlan build_transition_plan(TransitionMode mode,
                                     const std::map<int, FrameFeatures>& frames, int m, int n,
                                     int T_or_H, std::vector<int> extra_sources) {
    if (m >= n) throw InvalidInput("build_transition_plan: cut requires m < n");
    auto need = [&](int idx) -> const FrameFeatures& {
        auto it = frames.find(idx);
        if (it == frames.end())
            throw InvalidInput("build_transition_plan: missing keypoints for frame " +
                               std::to_string(idx));
        return it->second;
    };

    TransitionPlan plan;
    plan.mode = mode;
    plan.cut_start = m;
    plan.cut_end = n;
    plan.extra_sources = std::move(extra_sources);

    if (mode == TransitionMode::Insert) {
        plan.T = T_or_H;
        const auto& fm = need(m);
        const auto& fn = need(n);
        const auto alphas = insertion_schedule(plan.T);
        for (const OrderStep& os : recursive_order(plan.T)) {
            SynthStep st;
            st.slot = os.slot;
            st.alpha = alphas[os.slot - 1];
            st.kps = interpolate_keypoints(fm.kps, fn.kps, st.alpha);
            st.lms = interpolate_landmarks(fm.lms, fn.lms, st.alpha);
            st.bg_left = os.bg_left;
            st.bg_right = os.bg_right;
            plan.steps.push_back(std::move(st));
        }
    } else {
        plan.H = T_or_H;
        const int H = plan.H;
        const auto& fm = need(m);
        const auto& fn = need(n);
        const auto [pre, post] = blended_schedule(H);
        // pre-cut frames m-H..m drift toward frame n's pose
        for (int i = 0; i <= H; ++i) {
            const int frame = m - H + i;
            const auto& fi = need(frame);
            SynthStep st;
            st.slot = frame;
            st.alpha = pre[i];
            st.kps = interpolate_keypoints(fi.kps, fn.kps, st.alpha);
            st.lms = interpolate_landmarks(fi.lms, fn.lms, st.alpha);
            st.bg_left = frame;
            st.bg_right = n;
            plan.steps.push_back(std::move(st));
        }
        // post-cut frames n..n+H recover from frame m's pose
        for (int j = 0; j <= H; ++j) {
            const int frame = n + j;
            const auto& fj = need(frame);
            SynthStep st;
            st.slot = frame;
            st.alpha = post[j];
            st.kps = interpolate_keypoints(fm.kps, fj.kps, st.alpha);
            st.lms = interpolate_landmarks(fm.lms, fj.lms, st.alpha);
            st.bg_left = m;
            st.bg_right = frame;
            plan.steps.push_back(std::move(st));
        }
    }
    return plan;
}

}  // namespace jcut
