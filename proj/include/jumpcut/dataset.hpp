#pragma once

#include <string>
#include <vector>

#include "jumpcut/geometry.hpp"
#include "jumpcut/image.hpp"
#include "jumpcut/puppet.hpp"

namespace jcut {

struct FrameRecord {
    int index = 0;  // position within the clip
    std::string image_path;
    KeypointSet kps;
    LandmarkSet lms;
    bool has_kps = false;   // keypoint file present (smoothing needs these)
    bool has_pose = false;  // ground-truth motion metadata present
    double yaw = 0, tx = 0, ty = 0;
    bool validation = false;
    // source image size on disk; resized to the dataset resolution at load
    int src_width = 0, src_height = 0;
};

struct VideoClip {
    std::string name;
    std::string dir;
    std::vector<FrameRecord> frames;
};

struct Dataset {
    int width = 0, height = 0;
    int n = 0;  // quantization cells per axis
    std::vector<VideoClip> videos;

    int64_t total_frames() const {
        int64_t t = 0;
        for (const auto& v : videos) t += static_cast<int64_t>(v.frames.size());
        return t;
    }
};

// Provider format: one JSON document per frame with visible slots + landmarks.
std::string keypoints_to_provider_json(const KeypointSet& kps, const LandmarkSet& lms, int width,
                                       int height);
void parse_provider_json(const std::string& text, const std::string& file_label, KeypointSet& kps,
                         LandmarkSet& lms, int& width, int& height, int& n_cells,
                         std::string* dense_ref);

// Dense sidecar: header JSON {"dtype":"f32le","shape":[H,W,3]} next to a raw
// float32 array of interleaved (part index, u, v) per pixel.
DensePoseMap read_dense_sidecar(const std::string& header_path);

// Renders one motion script to out_dir (frames/, keypoints/, manifest.json).
// Returns the manifest path.
std::string generate_clip(const PuppetSpec& spec, const MotionScript& script,
                          const std::string& out_dir, int n_cells);

// Loads a clip directory or a directory of clip directories; scales keypoint
// coordinates to target_res (images are resized on load).
Dataset import_provider(const std::string& dir, int target_res);

// Flags every stride-th frame (offset stride/2) as held-out validation.
void mark_validation(Dataset& ds, int stride);

Image load_frame_image(const Dataset& ds, const FrameRecord& fr);

}  // namespace jcut
