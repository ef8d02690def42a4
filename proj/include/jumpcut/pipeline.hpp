#pragma once

// Jump-cut smoothing over PNG frame directories, plus the evaluation and
// attention-visualization commands. Smoothing loads a checkpoint, plans each
// cut (insert or blend), synthesizes frames in the plan's recursive order
// (synthesized frames are value-encoded again when later steps use them as
// backgrounds), and assembles an output directory where untouched frames are
// copied byte-for-byte.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "jumpcut/checkpoint.hpp"
#include "jumpcut/dataset.hpp"
#include "jumpcut/evalkit.hpp"
#include "jumpcut/motion.hpp"

namespace jcut::pipe {

struct CutRequest {
    int cut_start = 0;
    int cut_end = 0;
    std::string mode;  // empty falls back to the command-line default
    int T = -1;        // -1 falls back to the command-line default
    int H = -1;
};

// JSON array of {"cut_start", "cut_end", "mode"?, "T"?, "H"?}
std::vector<CutRequest> parse_cut_list(const std::string& text);

// Inference wrapper around one loaded model: splat/heatmap the driving
// keypoints, encode all inputs, attend, and decode one frame.
class FrameSynthesizer {
  public:
    explicit FrameSynthesizer(const ModelBundle& bundle) : bundle_(bundle) {}

    struct Source {
        const Image* image = nullptr;
        const KeypointSet* kps = nullptr;
        const LandmarkSet* lms = nullptr;
    };

    // Returns the synthesized frame in [0,1]. When `weights` is non-null the
    // attention matrix [n_q, n_k] is written to it.
    Image synthesize(const KeypointSet& kps, const LandmarkSet& lms,
                     const std::vector<Source>& sources, const Image& bg_a, const Image& bg_b,
                     const TensorT<float>& latent, TensorT<float>* weights = nullptr) const;

    const ModelBundle& bundle() const { return bundle_; }

  private:
    const ModelBundle& bundle_;
};

struct SmoothOptions {
    TransitionMode default_mode = TransitionMode::Insert;
    int t_frames = 5;
    int h_neighborhood = 4;
    int extra_sources = 0;
    uint64_t seed = 1;
    bool continue_on_error = false;  // record failed cuts and keep going
    bool synth_as_sources = false;   // feed synthesized frames back as attention sources
    bool viz_attention = false;      // emit per-step peak JSON + overlays
    double threshold = 0.75;
};

struct SmoothResult {
    int input_frames = 0;
    int output_frames = 0;
    int cuts_applied = 0;
    int cuts_failed = 0;
    std::string manifest_path;
};

SmoothResult cmd_smooth(const std::string& frames_dir, const std::string& cuts_path,
                        const std::string& checkpoint_dir, const std::string& out_dir,
                        const SmoothOptions& opt);

struct EvalOptions {
    std::string method = "model";
    std::string clip_dir;       // optional provider clip giving per-frame keypoints
    std::string yaw_meta_path;  // optional JSON {"frame.png": |yaw delta|}
};

// Compares same-named PNGs in two directories and writes report.csv/report.json.
std::vector<eval::ReportRow> cmd_eval(const std::string& pred_dir, const std::string& target_dir,
                                      const std::string& out_dir, const EvalOptions& opt);

struct VizOptions {
    int cut_start = 0;
    int cut_end = 1;
    double alpha = 0.5;
    int extra_sources = 0;
    uint64_t seed = 1;
    double threshold = 0.75;
};

struct VizResult {
    int peak_count = 0;
    std::string peaks_path;
    std::vector<std::string> overlay_paths;  // one per attention source
    Image frame;                             // the synthesized frame itself
};

// Synthesizes the alpha-blend of one cut's end frames and exports every
// attention peak at or above the threshold, plus per-source overlays marking
// the peak locations.
VizResult cmd_viz_attention(const std::string& frames_dir, const std::string& checkpoint_dir,
                            const std::string& out_dir, const VizOptions& opt);

}  // namespace jcut::pipe
