#include "jumpcut/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>

#include <json.hpp>

#include "jumpcut/warp.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace jcut::pipe {

namespace {

constexpr uint64_t kLatentStream = 301;
constexpr uint64_t kExtraStream = 302;

TensorT<float> add_batch(TensorT<float> t) {
    t.shape.insert(t.shape.begin(), 1);
    return t;
}

json load_json(const std::string& text, const std::string& what) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw InvalidInput(what + ": malformed JSON");
    return j;
}

std::string frame_name(int idx) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06d.png", idx);
    return buf;
}

// k distinct pose-carrying frame indices outside [lo, hi], via partial
// Fisher-Yates on seeded counter draws
std::vector<int> draw_extras(const std::map<int, FrameFeatures>& feats, int lo, int hi, int k,
                             const Rng& rng, uint64_t ctr_base) {
    std::vector<int> pool;
    for (const auto& [idx, f] : feats)
        if (idx < lo || idx > hi) pool.push_back(idx);
    const int take = std::min<int>(k, static_cast<int>(pool.size()));
    uint64_t ctr = ctr_base;
    for (int i = 0; i < take; ++i) {
        const uint64_t j = i + rng.below(kExtraStream, ctr++, pool.size() - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(take);
    return pool;
}

json peaks_to_json(const std::vector<warp::AttentionPeak>& peaks) {
    json arr = json::array();
    for (const auto& p : peaks)
        arr.push_back({{"query", {p.query_r, p.query_c}},
                       {"source", p.source},
                       {"loc", {p.loc_r, p.loc_c}},
                       {"score", p.score}});
    return arr;
}

// red block of `scale` pixels at each peak's source-grid location
void paint_peaks(std::vector<Image>& overlays, const std::vector<warp::AttentionPeak>& peaks,
                 int scale) {
    for (const auto& p : peaks) {
        Image& im = overlays[p.source];
        for (int dy = 0; dy < scale; ++dy)
            for (int dx = 0; dx < scale; ++dx) {
                const int x = p.loc_c * scale + dx, y = p.loc_r * scale + dy;
                if (x >= im.width || y >= im.height) continue;
                im.at(0, x, y) = 1.f;
                im.at(1, x, y) = 0.f;
                im.at(2, x, y) = 0.f;
            }
    }
}

void write_run_config(const std::string& out_dir, const json& j) {
    write_text_file((fs::path(out_dir) / "run-config.json").string(), j.dump(2) + "\n");
}

}  // namespace

std::vector<CutRequest> parse_cut_list(const std::string& text) {
    const json j = load_json(text, "cut list");
    if (!j.is_array()) throw InvalidInput("cut list: expected a JSON array");
    std::vector<CutRequest> cuts;
    for (const auto& e : j) {
        if (!e.is_object() || !e.contains("cut_start") || !e.contains("cut_end"))
            throw InvalidInput("cut list: each entry needs cut_start and cut_end");
        CutRequest c;
        c.cut_start = e.at("cut_start").get<int>();
        c.cut_end = e.at("cut_end").get<int>();
        if (e.contains("mode")) c.mode = e.at("mode").get<std::string>();
        if (e.contains("T")) c.T = e.at("T").get<int>();
        if (e.contains("H")) c.H = e.at("H").get<int>();
        cuts.push_back(std::move(c));
    }
    return cuts;
}

Image FrameSynthesizer::synthesize(const KeypointSet& kps, const LandmarkSet& lms,
                                   const std::vector<Source>& sources, const Image& bg_a,
                                   const Image& bg_b, const TensorT<float>& latent,
                                   TensorT<float>* weights) const {
    if (sources.empty()) throw InvalidInput("synthesize: need at least one attention source");
    ad::GradGuard off(false);
    const int res = bundle_.config.res;
    const double sigma = bundle_.config.sigma();

    auto query = warp::build_query_input(splat_keypoints(kps, res, res),
                                         landmark_heatmaps(lms, sigma, res, res));
    auto qf = bundle_.warpnet.query_enc(ad::constant(add_batch(std::move(query))));
    std::vector<ad::Var<float>> ks, vs;
    for (const auto& s : sources) {
        auto key = warp::build_key_input(splat_keypoints(*s.kps, res, res),
                                         landmark_heatmaps(*s.lms, sigma, res, res), *s.image);
        ks.push_back(bundle_.warpnet.key_enc(ad::constant(add_batch(std::move(key)))));
        vs.push_back(
            bundle_.warpnet.value_enc(ad::constant(add_batch(warp::build_value_input(*s.image)))));
    }
    auto attn = warp::cross_attention<float>(qf, ks, vs, weights != nullptr);

    auto va = bundle_.warpnet.value_enc(ad::constant(add_batch(warp::build_value_input(bg_a))));
    auto vb = bundle_.warpnet.value_enc(ad::constant(add_batch(warp::build_value_input(bg_b))));
    TensorT<float> lat = latent;
    if (lat.rank() == 1) lat.shape.insert(lat.shape.begin(), 1);
    auto out = bundle_.gen(ad::concat_channels<float>({attn.warped, va, vb}),
                           ad::constant(std::move(lat)));

    if (weights) {
        TensorT<float> w = std::move(*attn.weights);
        w.shape = {w.dim(1), w.dim(2)};  // single sample: drop the batch axis
        *weights = std::move(w);
    }
    Image img(res, res);
    for (size_t i = 0; i < img.data.size(); ++i)
        img.data[i] = std::clamp(0.5f * (out->value.data[i] + 1.f), 0.f, 1.f);
    return img;
}

SmoothResult cmd_smooth(const std::string& frames_dir, const std::string& cuts_path,
                        const std::string& checkpoint_dir, const std::string& out_dir,
                        const SmoothOptions& opt) {
    auto loaded = load_checkpoint(checkpoint_dir);
    const ModelBundle& bundle = loaded.bundle;
    const FrameSynthesizer synth(bundle);
    const int res = bundle.config.res;
    const int latent_dim = bundle.config.synth.latent_dim;
    const int grid = bundle.config.grid();

    Dataset ds = import_provider(frames_dir, res);
    if (ds.videos.size() != 1)
        throw InvalidInput("smooth: --frames must point at a single clip directory");
    if (ds.n != bundle.config.cells)
        throw InvalidInput("smooth: clip keypoints use " + std::to_string(ds.n) +
                           " UV cells but the checkpoint expects " +
                           std::to_string(bundle.config.cells));
    const VideoClip& clip = ds.videos[0];
    const int F = static_cast<int>(clip.frames.size());

    auto cuts = parse_cut_list(read_text_file(cuts_path));
    std::stable_sort(cuts.begin(), cuts.end(),
                     [](const CutRequest& a, const CutRequest& b) {
                         return a.cut_start < b.cut_start;
                     });

    std::map<int, FrameFeatures> feats;
    std::vector<Image> images(F);
    for (int i = 0; i < F; ++i) {
        images[i] = load_frame_image(ds, clip.frames[i]);
        if (clip.frames[i].has_kps) feats[i] = {clip.frames[i].kps, clip.frames[i].lms};
    }

    const Rng rng(opt.seed);
    fs::create_directories(fs::path(out_dir) / "frames");
    if (opt.viz_attention) fs::create_directories(fs::path(out_dir) / "viz");

    struct NewFrame {
        size_t cut = 0;  // index into cuts_json
        int slot = 0;
        Image image;
    };
    std::vector<bool> removed(F, false);
    std::map<int, NewFrame> rewrites;               // blend: input index -> new content
    std::map<int, std::vector<NewFrame>> inserted;  // insert: emitted right after this index
    json cuts_json = json::array();

    int last_touched = -1;
    int applied = 0, failed = 0;
    for (size_t ci = 0; ci < cuts.size(); ++ci) {
        const CutRequest& cr = cuts[ci];
        json cj;
        cj["cut_start"] = cr.cut_start;
        cj["cut_end"] = cr.cut_end;
        try {
            const TransitionMode mode =
                cr.mode.empty() ? opt.default_mode : parse_mode(cr.mode);
            const int m = cr.cut_start, n = cr.cut_end;
            const int T = cr.T >= 0 ? cr.T : opt.t_frames;
            const int H = cr.H >= 0 ? cr.H : opt.h_neighborhood;
            if (m < 0 || n >= F || m >= n)
                throw InvalidInput("smooth: cut (" + std::to_string(m) + ", " +
                                   std::to_string(n) + ") out of range for " +
                                   std::to_string(F) + " frames");
            const bool blend = mode == TransitionMode::Blend;
            const int lo = blend ? m - H : m;
            const int hi = blend ? n + H : n;
            if (blend && (lo < 0 || hi >= F))
                throw InvalidInput("smooth: blend neighborhood extends past the clip");
            if (lo <= last_touched)
                throw InvalidInput("smooth: cut (" + std::to_string(m) + ", " +
                                   std::to_string(n) + ") overlaps the previous cut");

            const std::vector<int> extras =
                draw_extras(feats, lo, hi, opt.extra_sources, rng, ci * 1024);
            TransitionPlan plan = build_transition_plan(mode, feats, m, n, blend ? H : T, extras);

            TensorT<float> latent({1, latent_dim});
            for (int j = 0; j < latent_dim; ++j)
                latent.data[j] = static_cast<float>(
                    rng.normal(kLatentStream, ci * static_cast<uint64_t>(latent_dim) + j));

            std::vector<int> base_sources = {m, n};
            for (int e : extras) base_sources.push_back(e);

            auto source_of = [&](int idx) {
                const FrameFeatures& f = feats.at(idx);
                return FrameSynthesizer::Source{&images[idx], &f.kps, &f.lms};
            };

            json steps_json = json::array();
            auto run_step = [&](const SynthStep& st, const std::vector<FrameSynthesizer::Source>&
                                                         sources,
                                const json& source_list, const Image& bg_a, const Image& bg_b) {
                TensorT<float> w;
                Image img = synth.synthesize(st.kps, st.lms, sources, bg_a, bg_b, latent,
                                             opt.viz_attention ? &w : nullptr);
                json sj;
                sj["slot"] = st.slot;
                sj["alpha"] = st.alpha;
                sj["seed"] = opt.seed;
                sj["sources"] = source_list;
                sj["backgrounds"] = {st.bg_left, st.bg_right};
                if (opt.viz_attention) {
                    const auto peaks = warp::attention_peaks(w, opt.threshold, grid, grid,
                                                             static_cast<int>(sources.size()));
                    const std::string stem =
                        "cut" + std::to_string(ci) + "-slot" + std::to_string(st.slot);
                    write_text_file((fs::path(out_dir) / "viz" / (stem + ".peaks.json")).string(),
                                    peaks_to_json(peaks).dump(2) + "\n");
                    std::vector<Image> overlays;
                    overlays.reserve(sources.size());
                    for (const auto& s : sources) overlays.push_back(*s.image);
                    paint_peaks(overlays, peaks, res / grid);
                    for (size_t s = 0; s < overlays.size(); ++s)
                        write_png((fs::path(out_dir) / "viz" /
                                   (stem + "-src" + std::to_string(s) + ".png"))
                                      .string(),
                                  overlays[s]);
                    sj["peaks"] = peaks.size();
                }
                steps_json.push_back(std::move(sj));
                return img;
            };

            if (!blend) {
                std::map<int, Image> slots;  // 0..T+1; terminals are the end frames
                slots[0] = images[m];
                slots[T + 1] = images[n];
                std::map<int, const SynthStep*> done;  // synthesized so far, by slot
                for (const SynthStep& st : plan.steps) {
                    std::vector<FrameSynthesizer::Source> sources;
                    json source_list = json::array();
                    for (int idx : base_sources) {
                        sources.push_back(source_of(idx));
                        source_list.push_back(idx);
                    }
                    if (opt.synth_as_sources)
                        for (const auto& [slot, prev] : done) {
                            sources.push_back({&slots.at(slot), &prev->kps, &prev->lms});
                            source_list.push_back("slot:" + std::to_string(slot));
                        }
                    Image img = run_step(st, sources, source_list, slots.at(st.bg_left),
                                         slots.at(st.bg_right));
                    slots[st.slot] = std::move(img);
                    done[st.slot] = &st;
                }
                for (int i = m + 1; i < n; ++i) removed[i] = true;
                auto& after = inserted[m];
                for (int s = 1; s <= T; ++s)
                    after.push_back({ci, s, std::move(slots.at(s))});
            } else {
                std::vector<NewFrame> pending;  // commit only once the whole cut succeeds
                for (const SynthStep& st : plan.steps) {
                    std::vector<FrameSynthesizer::Source> sources;
                    json source_list = json::array();
                    std::vector<int> ids = base_sources;
                    if (std::find(ids.begin(), ids.end(), st.slot) == ids.end())
                        ids.push_back(st.slot);  // the frame's own appearance
                    for (int idx : ids) {
                        sources.push_back(source_of(idx));
                        source_list.push_back(idx);
                    }
                    Image img = run_step(st, sources, source_list, images[st.bg_left],
                                         images[st.bg_right]);
                    pending.push_back({ci, st.slot, std::move(img)});
                }
                for (NewFrame& nf : pending) {
                    const int frame_idx = nf.slot;
                    rewrites[frame_idx] = std::move(nf);
                }
            }

            cj["mode"] = mode_name(mode);
            if (blend)
                cj["H"] = H;
            else
                cj["T"] = T;
            cj["extra_sources"] = extras;
            cj["steps"] = std::move(steps_json);
            last_touched = hi;
            ++applied;
        } catch (const Error& e) {
            if (!opt.continue_on_error) throw;
            cj["error"] = e.what();
            ++failed;
        }
        cuts_json.push_back(std::move(cj));
    }

    // assemble the output sequence; untouched frames are copied byte-for-byte
    auto set_output = [&](const NewFrame& nf, const std::string& rel) {
        for (auto& sj : cuts_json[nf.cut]["steps"])
            if (sj["slot"] == nf.slot) sj["output"] = rel;
    };
    int out_idx = 0;
    for (int i = 0; i < F; ++i) {
        if (removed[i]) continue;
        const std::string rel = "frames/" + frame_name(out_idx);
        const fs::path dst = fs::path(out_dir) / rel;
        auto rw = rewrites.find(i);
        if (rw != rewrites.end()) {
            write_png(dst.string(), rw->second.image);
            set_output(rw->second, rel);
        } else {
            fs::copy_file(clip.frames[i].image_path, dst, fs::copy_options::overwrite_existing);
        }
        ++out_idx;
        auto ins = inserted.find(i);
        if (ins == inserted.end()) continue;
        for (const NewFrame& nf : ins->second) {
            const std::string nrel = "frames/" + frame_name(out_idx);
            write_png((fs::path(out_dir) / nrel).string(), nf.image);
            set_output(nf, nrel);
            ++out_idx;
        }
    }

    json manifest;
    manifest["seed"] = opt.seed;
    manifest["input_frames"] = F;
    manifest["output_frames"] = out_idx;
    manifest["cuts"] = std::move(cuts_json);
    const std::string manifest_path = (fs::path(out_dir) / "transitions.json").string();
    write_text_file(manifest_path, manifest.dump(2) + "\n");

    write_run_config(out_dir,
                     {{"command", "smooth"},
                      {"frames", frames_dir},
                      {"cuts", cuts_path},
                      {"checkpoint", checkpoint_dir},
                      {"mode", mode_name(opt.default_mode)},
                      {"t_frames", opt.t_frames},
                      {"h_neighborhood", opt.h_neighborhood},
                      {"extra_sources", opt.extra_sources},
                      {"seed", opt.seed},
                      {"continue_on_error", opt.continue_on_error},
                      {"synth_as_sources", opt.synth_as_sources},
                      {"viz_attention", opt.viz_attention},
                      {"threshold", opt.threshold},
                      {"model", json::parse(model_config_json(bundle.config, bundle.train,
                                                              bundle.step, bundle.stage,
                                                              bundle.param_seed))}});

    SmoothResult res_out;
    res_out.input_frames = F;
    res_out.output_frames = out_idx;
    res_out.cuts_applied = applied;
    res_out.cuts_failed = failed;
    res_out.manifest_path = manifest_path;
    return res_out;
}

std::vector<eval::ReportRow> cmd_eval(const std::string& pred_dir, const std::string& target_dir,
                                      const std::string& out_dir, const EvalOptions& opt) {
    if (!fs::is_directory(pred_dir) || !fs::is_directory(target_dir))
        throw InvalidInput("eval: prediction and target must be directories of PNG frames");
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(pred_dir))
        if (e.is_regular_file() && e.path().extension() == ".png")
            names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    if (names.empty()) throw InvalidInput("eval: no PNG frames in " + pred_dir);

    std::map<std::string, double> yaw;
    if (!opt.yaw_meta_path.empty()) {
        const json j = load_json(read_text_file(opt.yaw_meta_path), "yaw metadata");
        if (!j.is_object()) throw InvalidInput("yaw metadata: expected an object");
        for (const auto& [k, v] : j.items()) yaw[k] = v.get<double>();
    }

    std::map<std::string, const FrameRecord*> kps_by_name;
    std::optional<Dataset> clip;
    if (!opt.clip_dir.empty()) {
        const Image probe = read_png((fs::path(pred_dir) / names[0]).string());
        clip = import_provider(opt.clip_dir, probe.width);
        for (const auto& v : clip->videos)
            for (const auto& fr : v.frames)
                if (fr.has_kps)
                    kps_by_name[fs::path(fr.image_path).filename().string()] = &fr;
    }

    std::vector<eval::EvalSample> samples;
    for (const auto& name : names) {
        const fs::path tpath = fs::path(target_dir) / name;
        if (!fs::exists(tpath))
            throw InvalidInput("eval: no target frame named " + name);
        const Image pred = read_png((fs::path(pred_dir) / name).string());
        const Image tgt = read_png(tpath.string());
        eval::EvalSample s;
        s.method = opt.method;
        s.psnr = eval::psnr(pred, tgt);
        auto it = kps_by_name.find(name);
        if (it != kps_by_name.end())
            s.identity = eval::identity_similarity(eval::crop_head(pred, it->second->kps),
                                                   eval::crop_head(tgt, it->second->kps),
                                                   eval::grayscale16_embedding);
        else
            s.identity = eval::identity_similarity(pred, tgt, eval::grayscale16_embedding);
        auto yit = yaw.find(name);
        s.yaw_delta = yit == yaw.end() ? 0.0 : yit->second;
        samples.push_back(std::move(s));
    }

    const auto rows = eval::rotation_binned_report(samples);
    fs::create_directories(out_dir);
    write_text_file((fs::path(out_dir) / "report.csv").string(), eval::report_csv(rows));
    write_text_file((fs::path(out_dir) / "report.json").string(), eval::report_json(rows));
    write_run_config(out_dir, {{"command", "eval"},
                               {"pred", pred_dir},
                               {"target", target_dir},
                               {"method", opt.method},
                               {"clip", opt.clip_dir},
                               {"yaw_meta", opt.yaw_meta_path}});
    return rows;
}

VizResult cmd_viz_attention(const std::string& frames_dir, const std::string& checkpoint_dir,
                            const std::string& out_dir, const VizOptions& opt) {
    auto loaded = load_checkpoint(checkpoint_dir);
    const ModelBundle& bundle = loaded.bundle;
    const FrameSynthesizer synth(bundle);
    const int res = bundle.config.res;
    const int grid = bundle.config.grid();
    const int latent_dim = bundle.config.synth.latent_dim;

    Dataset ds = import_provider(frames_dir, res);
    if (ds.videos.size() != 1)
        throw InvalidInput("viz-attention: --frames must point at a single clip directory");
    const VideoClip& clip = ds.videos[0];
    const int F = static_cast<int>(clip.frames.size());
    const int m = opt.cut_start, n = opt.cut_end;
    if (m < 0 || n >= F || m >= n)
        throw InvalidInput("viz-attention: cut out of range");

    std::map<int, FrameFeatures> feats;
    for (int i = 0; i < F; ++i)
        if (clip.frames[i].has_kps) feats[i] = {clip.frames[i].kps, clip.frames[i].lms};
    if (!feats.count(m) || !feats.count(n))
        throw InvalidInput("viz-attention: end frames need keypoints");

    const Rng rng(opt.seed);
    const std::vector<int> extras = draw_extras(feats, m, n, opt.extra_sources, rng, 0);
    std::vector<int> ids = {m, n};
    for (int e : extras) ids.push_back(e);

    std::vector<Image> srcs;
    srcs.reserve(ids.size());
    for (int idx : ids) srcs.push_back(load_frame_image(ds, clip.frames[idx]));
    std::vector<FrameSynthesizer::Source> sources;
    for (size_t i = 0; i < ids.size(); ++i)
        sources.push_back({&srcs[i], &feats.at(ids[i]).kps, &feats.at(ids[i]).lms});

    const KeypointSet kps = interpolate_keypoints(feats.at(m).kps, feats.at(n).kps, opt.alpha);
    const LandmarkSet lms = interpolate_landmarks(feats.at(m).lms, feats.at(n).lms, opt.alpha);
    TensorT<float> latent({1, latent_dim});
    for (int j = 0; j < latent_dim; ++j)
        latent.data[j] = static_cast<float>(rng.normal(kLatentStream, j));

    TensorT<float> w;
    VizResult out;
    out.frame = synth.synthesize(kps, lms, sources, srcs[0], srcs[1], latent, &w);
    const auto peaks =
        warp::attention_peaks(w, opt.threshold, grid, grid, static_cast<int>(sources.size()));
    out.peak_count = static_cast<int>(peaks.size());

    fs::create_directories(out_dir);
    write_png((fs::path(out_dir) / "frame.png").string(), out.frame);
    out.peaks_path = (fs::path(out_dir) / "peaks.json").string();
    write_text_file(out.peaks_path, peaks_to_json(peaks).dump(2) + "\n");

    std::vector<Image> overlays = srcs;
    paint_peaks(overlays, peaks, res / grid);
    for (size_t s = 0; s < overlays.size(); ++s) {
        const std::string p =
            (fs::path(out_dir) / ("overlay-src" + std::to_string(s) + ".png")).string();
        write_png(p, overlays[s]);
        out.overlay_paths.push_back(p);
    }

    write_run_config(out_dir, {{"command", "viz-attention"},
                               {"frames", frames_dir},
                               {"checkpoint", checkpoint_dir},
                               {"cut_start", m},
                               {"cut_end", n},
                               {"alpha", opt.alpha},
                               {"extra_sources", opt.extra_sources},
                               {"seed", opt.seed},
                               {"threshold", opt.threshold},
                               {"peaks", out.peak_count}});
    return out;
}

}  // namespace jcut::pipe
