#pragma once

#include <string>
#include <vector>

#include "jumpcut/geometry.hpp"
#include "jumpcut/image.hpp"

namespace jcut {

// Part ids within the 14-part space. Ids 9..14 are never rendered.
enum PuppetPart : int {
    kTorso = 1,
    kHead = 2,
    kUpperArmL = 3,
    kUpperArmR = 4,
    kLowerArmL = 5,
    kLowerArmR = 6,
    kHandL = 7,
    kHandR = 8,
};

// Pose parameters. Translations are in canonical units (canvas/64 pixels) so
// scripts stay resolution independent. Angles in degrees.
struct PuppetPose {
    double yaw = 0;  // head rotation about the vertical axis
    double tx = 0;
    double ty = 0;
    double shoulder_l = -25;  // limb direction from straight down, screen-wise
    double shoulder_r = 25;
    double elbow_l = -15;
    double elbow_r = 15;
};

struct PuppetSpec {
    int canvas = 64;
    uint64_t texture_seed = 1;
    uint64_t background_seed = 2;
};

struct RenderResult {
    Image image;
    DensePoseMap dpose;
    LandmarkSet landmarks;
};

RenderResult render_puppet(const PuppetSpec& spec, const PuppetPose& pose);

// Evaluates the part's surface UV map at a continuous image point, ignoring
// occlusion by other parts. Returns false outside the part's footprint. The
// renderer samples this same map at integer pixels, so quantized centroids
// can be checked against it directly.
bool puppet_analytic_uv(const PuppetSpec& spec, const PuppetPose& pose, int part, double x,
                        double y, double* u, double* v);

struct MotionScript {
    std::string name;
    double fps = 25;
    std::vector<PuppetPose> poses;
};

/// Eight stock motions: four yaw sweeps (named yaw_sweep_*), translation,
// bobbing, and arm gestures. Used by the dataset generator and the acceptance
// evaluation protocol.
std::vector<MotionScript> default_scripts(int frames_per_script, uint64_t seed);

}  // namespace jcut
