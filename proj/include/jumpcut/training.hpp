#pragma once

// Two-stage adversarial training. Stage 1 trains on plain source/source/target
// triplets; stage 2 fine-tunes with the target's visibility ablated to the
// intersection of the source visibilities so the generator learns to fill
// disoccluded regions. All random draws are keyed by (seed, stream, step) so
// a resumed run replays the exact same sequence.

#include <string>
#include <vector>

#include "jumpcut/checkpoint.hpp"
#include "jumpcut/dataset.hpp"

namespace jcut::train {

struct Triplet {
    int source_a = 0, source_b = 0, target = 0;
};

// Three distinct positions drawn uniformly without replacement from
// [0, pool_size); consumes counters ctr, ctr+1, ctr+2 on `stream`.
Triplet sample_triplet(int pool_size, const Rng& rng, uint64_t stream, uint64_t ctr);

// Target visibility ANDed with the intersection of the source visibilities;
// payloads survive untouched on slots that stay visible.
KeypointSet ablate_target_visibility(const KeypointSet& target,
                                     const std::vector<const KeypointSet*>& sources);

// Bias-corrected Adam over float parameters; moments live in AdamMoments so
// they can be checkpointed.
class Adam {
  public:
    Adam(double lr, double beta1, double beta2, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<std::string>& names, const std::vector<ad::Var<float>>& params,
              const std::vector<ad::Var<float>>& grads, AdamMoments& state) const;

  private:
    double lr_, beta1_, beta2_, eps_;
};

struct StepMetrics {
    int64_t step = 0;
    double g_loss = 0, d_loss = 0, r1 = 0, val_psnr = 0;
};

class Trainer {
  public:
    // out_dir receives metrics.csv and checkpoint directories; images are
    // cached in memory up front.
    Trainer(const Dataset& data, ModelBundle& bundle, TrainingState& state, std::string out_dir);

    // Runs `steps` steps of the given stage, logging one metrics row per step
    // and checkpointing at the configured cadence plus at the end. Throws
    // TrainingDiverged on a non-finite loss, leaving the last checkpoint
    // in place.
    void run(int stage, int64_t steps);

    const std::vector<StepMetrics>& history() const { return history_; }
    std::string latest_checkpoint() const { return latest_checkpoint_; }

  private:
    struct SampleInputs {
        TensorT<float> query, key_a, key_b, value_a, value_b, cond;
        std::vector<float> target_pm1;  // target image in [-1,1]
    };

    SampleInputs build_sample(int video, const Triplet& t, int stage) const;
    StepMetrics step_once(int stage);
    double validation_psnr();
    void save(const std::string& name);

    const Dataset& data_;
    ModelBundle& bundle_;
    TrainingState& state_;
    std::string out_dir_;
    Rng rng_;
    Adam adam_;

    std::vector<std::vector<Image>> images_;      // [video][frame]
    std::vector<std::vector<int>> train_pool_;    // per video: usable frame indices
    std::vector<int> usable_videos_;              // videos with >= 3 train frames

    struct ValItem {
        int video = 0;
        Triplet triplet;  // sources = nearest train frames around the target
        TensorT<float> latent;
    };
    std::vector<ValItem> val_items_;

    std::vector<std::string> gen_names_, disc_names_;
    std::vector<ad::Var<float>> gen_params_, disc_params_;

    std::vector<StepMetrics> history_;
    std::string latest_checkpoint_;
};

}  // namespace jcut::train
