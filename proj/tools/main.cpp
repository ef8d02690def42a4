// jumpcut: smooth jump cuts in talking-head frame sequences by synthesizing
// pose-interpolated transition frames with a trained warp/synthesis model.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "jumpcut/checkpoint.hpp"
#include "jumpcut/dataset.hpp"
#include "jumpcut/pipeline.hpp"
#include "jumpcut/puppet.hpp"
#include "jumpcut/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace jcut;

namespace {

int cmd_make_synthetic(const std::string& out_dir, int frames_per_script, uint64_t seed,
                       int cells, int canvas) {
    PuppetSpec spec;
    spec.canvas = canvas;
    spec.texture_seed = seed;
    spec.background_seed = seed + 1;
    fs::create_directories(out_dir);
    json clips = json::array();
    for (const MotionScript& ms : default_scripts(frames_per_script, seed)) {
        const std::string clip_dir = (fs::path(out_dir) / ms.name).string();
        const std::string manifest = generate_clip(spec, ms, clip_dir, cells);
        clips.push_back({{"name", ms.name}, {"manifest", manifest}});
        std::printf("wrote %s (%zu frames)\n", clip_dir.c_str(), ms.poses.size());
    }
    const json cfg = {{"command", "make-synthetic"}, {"out", out_dir},
                      {"frames_per_script", frames_per_script}, {"seed", seed},
                      {"cells", cells}, {"canvas", canvas}, {"clips", clips}};
    write_text_file((fs::path(out_dir) / "run-config.json").string(), cfg.dump(2) + "\n");
    return 0;
}

int cmd_import(const std::string& frames_dir, int res, const std::string& out_dir) {
    const Dataset ds = import_provider(frames_dir, res);
    json summary = {{"videos", ds.videos.size()}, {"frames", ds.total_frames()},
                    {"width", ds.width}, {"height", ds.height}, {"uv_cells", ds.n}};
    std::printf("%s\n", summary.dump(2).c_str());
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_text_file((fs::path(out_dir) / "summary.json").string(), summary.dump(2) + "\n");
        const json cfg = {{"command", "import"}, {"frames", frames_dir}, {"res", res}};
        write_text_file((fs::path(out_dir) / "run-config.json").string(), cfg.dump(2) + "\n");
    }
    return 0;
}

int cmd_train(const std::string& data_dir, const std::string& out_dir, const std::string& profile,
              uint64_t seed, int stage1_steps, int stage2_steps, int batch, int checkpoint_every,
              int val_stride, const std::string& resume) {
    ModelConfig mc = profile == "full" ? ModelConfig::full() : ModelConfig::toy();
    TrainConfig tc = profile == "full" ? TrainConfig() : TrainConfig::toy();
    if (stage1_steps >= 0) tc.stage1_steps = stage1_steps;
    if (stage2_steps >= 0) tc.stage2_steps = stage2_steps;
    if (batch > 0) tc.batch = batch;
    if (checkpoint_every > 0) tc.checkpoint_every = checkpoint_every;
    if (val_stride > 0) tc.val_stride = val_stride;
    tc.seed = seed;

    Dataset ds = import_provider(data_dir, mc.res);
    mark_validation(ds, tc.val_stride);

    std::optional<LoadedCheckpoint> loaded;
    if (!resume.empty()) loaded = load_checkpoint(resume);
    ModelBundle fresh(mc, tc, seed);
    ModelBundle& bundle = loaded ? loaded->bundle : fresh;
    TrainingState state;
    if (loaded && loaded->training_state) state = *loaded->training_state;

    fs::create_directories(out_dir);
    const json cfg = {{"command", "train"}, {"data", data_dir}, {"profile", profile},
                      {"seed", seed}, {"resume", resume},
                      {"model", json::parse(model_config_json(bundle.config, bundle.train,
                                                              bundle.step, bundle.stage,
                                                              bundle.param_seed))}};
    write_text_file((fs::path(out_dir) / "run-config.json").string(), cfg.dump(2) + "\n");

    train::Trainer trainer(ds, bundle, state, out_dir);
    const int64_t done1 = std::min<int64_t>(bundle.step, bundle.train.stage1_steps);
    if (bundle.train.stage1_steps - done1 > 0) {
        std::printf("stage 1: %lld steps\n",
                    static_cast<long long>(bundle.train.stage1_steps - done1));
        trainer.run(1, bundle.train.stage1_steps - done1);
    }
    const int64_t done2 = bundle.step - bundle.train.stage1_steps;
    if (bundle.train.stage2_steps - done2 > 0) {
        std::printf("stage 2: %lld steps\n",
                    static_cast<long long>(bundle.train.stage2_steps - done2));
        trainer.run(2, bundle.train.stage2_steps - done2);
    }
    std::printf("final checkpoint: %s\n", trainer.latest_checkpoint().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"jump-cut smoothing for talking-head frame sequences"};
    app.require_subcommand(1);

    auto* mk = app.add_subcommand("make-synthetic", "render the procedural puppet dataset");
    std::string mk_out;
    int mk_frames = 250, mk_cells = 8, mk_canvas = 64;
    uint64_t mk_seed = 1;
    mk->add_option("--out", mk_out, "output dataset directory")->required();
    mk->add_option("--frames-per-script", mk_frames, "frames rendered per motion script");
    mk->add_option("--seed", mk_seed, "texture/motion seed");
    mk->add_option("--cells", mk_cells, "UV quantization cells per axis");
    mk->add_option("--canvas", mk_canvas, "square canvas size in pixels");

    auto* im = app.add_subcommand("import", "validate and summarize a provider-format dataset");
    std::string im_frames, im_out;
    int im_res = 64;
    im->add_option("--frames", im_frames, "clip directory or directory of clips")->required();
    im->add_option("--res", im_res, "target resolution");
    im->add_option("--out", im_out, "optional directory for the summary");

    auto* tr = app.add_subcommand("train", "run two-stage adversarial training");
    std::string tr_data, tr_out, tr_profile = "toy", tr_resume;
    uint64_t tr_seed = 1234;
    int tr_s1 = -1, tr_s2 = -1, tr_batch = 0, tr_ckpt_every = 0, tr_val_stride = 0;
    tr->add_option("--data", tr_data, "training dataset directory")->required();
    tr->add_option("--out", tr_out, "output directory (metrics, checkpoints)")->required();
    tr->add_option("--profile", tr_profile, "model profile: toy or full")
        ->check(CLI::IsMember({"toy", "full"}));
    tr->add_option("--seed", tr_seed, "parameter and data-order seed");
    tr->add_option("--stage1-steps", tr_s1, "override stage-1 step count");
    tr->add_option("--stage2-steps", tr_s2, "override stage-2 step count");
    tr->add_option("--batch", tr_batch, "override batch size");
    tr->add_option("--checkpoint-every", tr_ckpt_every, "override checkpoint cadence");
    tr->add_option("--val-stride", tr_val_stride, "hold out every k-th frame for validation");
    tr->add_option("--resume", tr_resume, "checkpoint directory to continue from");

    auto* sm = app.add_subcommand("smooth", "synthesize transitions for a cut list");
    std::string sm_frames, sm_cuts, sm_ckpt, sm_out, sm_mode = "insert";
    pipe::SmoothOptions sopt;
    sm->add_option("--frames", sm_frames, "input clip directory")->required();
    sm->add_option("--cuts", sm_cuts, "cut-list JSON file")->required();
    sm->add_option("--checkpoint", sm_ckpt, "model checkpoint directory")->required();
    sm->add_option("--out", sm_out, "output directory")->required();
    sm->add_option("--mode", sm_mode, "default transition mode: insert or blend")
        ->check(CLI::IsMember({"insert", "blend"}));
    sm->add_option("--t-frames", sopt.t_frames, "inserted frames per cut (insert mode)");
    sm->add_option("--h-neighborhood", sopt.h_neighborhood, "blend neighborhood half-width");
    sm->add_option("--extra-sources", sopt.extra_sources, "extra attention source frames");
    sm->add_option("--seed", sopt.seed, "latent/source-selection seed");
    sm->add_option("--threshold", sopt.threshold, "attention-peak threshold for viz output");
    sm->add_flag("--continue-on-error", sopt.continue_on_error,
                 "record failed cuts and keep going");
    sm->add_flag("--synth-as-sources", sopt.synth_as_sources,
                 "feed synthesized frames back as attention sources");
    sm->add_flag("--viz-attention", sopt.viz_attention, "emit attention peaks and overlays");

    auto* ev = app.add_subcommand("eval", "compare two frame directories");
    std::string ev_pred, ev_target, ev_out;
    pipe::EvalOptions eopt;
    ev->add_option("--pred", ev_pred, "predicted frames directory")->required();
    ev->add_option("--target", ev_target, "ground-truth frames directory")->required();
    ev->add_option("--out", ev_out, "report output directory")->required();
    ev->add_option("--method", eopt.method, "method label for the report");
    ev->add_option("--clip", eopt.clip_dir, "provider clip supplying head keypoints");
    ev->add_option("--yaw-meta", eopt.yaw_meta_path, "JSON map frame name -> |yaw delta|");

    auto* vz = app.add_subcommand("viz-attention", "visualize attention peaks for one cut");
    std::string vz_frames, vz_ckpt, vz_out;
    pipe::VizOptions vopt;
    vz->add_option("--frames", vz_frames, "input clip directory")->required();
    vz->add_option("--checkpoint", vz_ckpt, "model checkpoint directory")->required();
    vz->add_option("--out", vz_out, "output directory")->required();
    vz->add_option("--cut-start", vopt.cut_start, "cut start frame m")->required();
    vz->add_option("--cut-end", vopt.cut_end, "cut end frame n")->required();
    vz->add_option("--alpha", vopt.alpha, "interpolation weight of the probe frame");
    vz->add_option("--extra-sources", vopt.extra_sources, "extra attention source frames");
    vz->add_option("--seed", vopt.seed, "latent/source-selection seed");
    vz->add_option("--threshold", vopt.threshold, "peak score threshold");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*mk) return cmd_make_synthetic(mk_out, mk_frames, mk_seed, mk_cells, mk_canvas);
        if (*im) return cmd_import(im_frames, im_res, im_out);
        if (*tr)
            return cmd_train(tr_data, tr_out, tr_profile, tr_seed, tr_s1, tr_s2, tr_batch,
                             tr_ckpt_every, tr_val_stride, tr_resume);
        if (*sm) {
            sopt.default_mode = parse_mode(sm_mode);
            const auto res = pipe::cmd_smooth(sm_frames, sm_cuts, sm_ckpt, sm_out, sopt);
            std::printf("frames: %d in, %d out; cuts: %d applied, %d failed\n%s\n",
                        res.input_frames, res.output_frames, res.cuts_applied, res.cuts_failed,
                        res.manifest_path.c_str());
            return res.cuts_failed > 0 ? 3 : 0;
        }
        if (*ev) {
            const auto rows = pipe::cmd_eval(ev_pred, ev_target, ev_out, eopt);
            std::printf("%s", eval::report_csv(rows).c_str());
            return 0;
        }
        if (*vz) {
            const auto res = pipe::cmd_viz_attention(vz_frames, vz_ckpt, vz_out, vopt);
            std::printf("%d peaks -> %s\n", res.peak_count, res.peaks_path.c_str());
            return 0;
        }
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const InvalidInput& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const DomainError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const TrainingDiverged& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
