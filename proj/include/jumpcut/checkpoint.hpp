#pragma once

// Model assembly and checkpoint directories. A checkpoint is a directory:
//   config.json         full config snapshot + step/stage counters
//   params/<name>.f32le one raw little-endian float array per parameter
//   opt/<name>.{m,v}.f32le  Adam moments (present when training state saved)
//   manifest.json       every file with shape and crc32
// Loading rebuilds the models from the snapshot and verifies every checksum.

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "jumpcut/synth.hpp"
#include "jumpcut/warp.hpp"

namespace jcut {

struct ModelConfig {
    int res = 256;
    int cells = 64;            // UV grid resolution n
    double heatmap_sigma = 0;  // 0 means the resolution-scaled default
    warp::WarpNetConfig warp;
    synth::SynthConfig synth;

    double sigma() const { return heatmap_sigma > 0 ? heatmap_sigma : default_heatmap_sigma(res); }
    int grid() const { return res / 4; }

    static ModelConfig toy() {
        ModelConfig c;
        c.res = 64;
        c.cells = 8;
        c.warp = warp::WarpNetConfig::toy();
        c.synth = synth::SynthConfig::toy();
        return c;
    }

    static ModelConfig full() {
        ModelConfig c;
        c.synth = synth::SynthConfig::for_dv(c.warp.d_v);
        return c;
    }
};

struct TrainConfig {
    double lr = 2e-4;
    double beta1 = 0.0;
    double beta2 = 0.99;
    int batch = 8;
    double r1_gamma = 10.0;  // 1 for the toy profile
    double l1_weight = 10.0;
    int stage1_steps = 20000;
    int stage2_steps = 5000;
    int checkpoint_every = 1000;
    int val_batch = 8;
    int val_stride = 10;
    uint64_t seed = 1234;

    static TrainConfig toy() {
        TrainConfig c;
        c.r1_gamma = 1.0;
        return c;
    }
};

struct ModelBundle {
    ModelConfig config;
    TrainConfig train;
    uint64_t param_seed = 0;
    nn::ParamStore<float> params;
    warp::WarpNet<float> warpnet;
    synth::Generator<float> gen;
    synth::Discriminator<float> disc;
    int64_t step = 0;
    int stage = 1;

    ModelBundle(ModelConfig mc, TrainConfig tc, uint64_t param_seed_)
        : config(fixup(std::move(mc))),
          train(tc),
          param_seed(param_seed_),
          params(param_seed_),
          warpnet(params, config.warp),
          gen(params, config.synth),
          disc(params, config.synth) {}

  private:
    static ModelConfig fixup(ModelConfig c) {
        c.synth.feature_channels = 3 * c.warp.d_v;
        return c;
    }
};

// Adam first/second moments keyed by parameter name, plus the update counter.
struct AdamMoments {
    int64_t t = 0;
    std::unordered_map<std::string, TensorT<float>> m, v;
};

struct TrainingState {
    AdamMoments gen_opt;   // generator-side: encoders + generator
    AdamMoments disc_opt;  // discriminator
};

void save_checkpoint(const std::string& dir, const ModelBundle& bundle,
                     const TrainingState* training_state = nullptr);

struct LoadedCheckpoint {
    ModelBundle bundle;
    std::optional<TrainingState> training_state;
};

LoadedCheckpoint load_checkpoint(const std::string& dir);

// config snapshot JSON used both in checkpoints and run-config files
std::string model_config_json(const ModelConfig& mc, const TrainConfig& tc, int64_t step,
                              int stage, uint64_t param_seed);

}  // namespace jcut
