#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "jumpcut/geometry.hpp"

namespace jcut {

enum class TransitionMode { Insert, Blend };

TransitionMode parse_mode(const std::string& s);
std::string mode_name(TransitionMode m);

struct FrameFeatures {
    KeypointSet kps;
    LandmarkSet lms;
};

// One synthesis step: which output slot to fill, the interpolation weight,
// the driving keypoints, and the two already-available frames it leans on.
struct SynthStep {
    int slot = 0;     // insert: 1..T inside the cut; blend: absolute frame index
    double alpha = 0;
    KeypointSet kps;
    LandmarkSet lms;
    int bg_left = 0;  // same numbering convention as slot
    int bg_right = 0;
};

struct TransitionPlan {
    TransitionMode mode = TransitionMode::Insert;
    int cut_start = 0;  // m
    int cut_end = 0;    // n
    int T = 0;
    int H = 0;
    std::vector<SynthStep> steps;
    std::vector<int> extra_sources;  // absolute frame indices
};

struct OrderStep {
    int slot;
    int bg_left;
    int bg_right;
};

KeypointSet interpolate_keypoints(const KeypointSet& A, const KeypointSet& B, double alpha);
LandmarkSet interpolate_landmarks(const LandmarkSet& A, const LandmarkSet& B, double alpha);
std::vector<double> insertion_schedule(int T);
// (pre-cut weights for frames m-H..m, post-cut weights for frames n..n+H)
std::pair<std::vector<double>, std::vector<double>> blended_schedule(int H);
// slots 1..T between terminals 0 (= I_m) and T+1 (= I_n), outside-in
std::vector<OrderStep> recursive_order(int T);

TransitionPlan build_transition_plan(TransitionMode mode,
                                     const std::map<int, FrameFeatures>& frames, int m, int n,
                                     int T_or_H, std::vector<int> extra_sources);

}  // namespace jcut
