#include "jumpcut/training.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "jumpcut/warp.hpp"

namespace fs = std::filesystem;

namespace jcut::train {

namespace {

// rng stream ids for the training loop draws
constexpr uint64_t kVideoStream = 201;
constexpr uint64_t kTripletStream = 202;
constexpr uint64_t kLatentStream = 203;
constexpr uint64_t kValLatentStream = 205;

bool finite(double v) { return std::isfinite(v); }

}  // namespace

Triplet sample_triplet(int pool_size, const Rng& rng, uint64_t stream, uint64_t ctr) {
    if (pool_size < 3) throw InvalidInput("sample_triplet: need at least 3 usable frames");
    const int a = static_cast<int>(rng.below(stream, ctr, pool_size));
    int b = static_cast<int>(rng.below(stream, ctr + 1, pool_size - 1));
    if (b >= a) ++b;
    int c = static_cast<int>(rng.below(stream, ctr + 2, pool_size - 2));
    const int lo = std::min(a, b), hi = std::max(a, b);
    if (c >= lo) ++c;
    if (c >= hi) ++c;
    return {a, b, c};
}

KeypointSet ablate_target_visibility(const KeypointSet& target,
                                     const std::vector<const KeypointSet*>& sources) {
    auto mask = visibility_intersection(sources);
    if (target.num_slots() != static_cast<int>(mask.size()))
        throw InvalidInput("ablate_target_visibility: slot layouts differ");
    KeypointSet out = target;
    for (int i = 0; i < out.num_slots(); ++i)
        out.slots[i].visible = out.slots[i].visible && mask[i];
    return out;
}

void Adam::step(const std::vector<std::string>& names, const std::vector<ad::Var<float>>& params,
                const std::vector<ad::Var<float>>& grads, AdamMoments& state) const {
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(state.t));
    for (size_t p = 0; p < params.size(); ++p) {
        auto& value = params[p]->value;
        auto mit = state.m.find(names[p]);
        if (mit == state.m.end()) {
            mit = state.m.emplace(names[p], TensorT<float>::zeros(value.shape)).first;
            state.v.emplace(names[p], TensorT<float>::zeros(value.shape));
        }
        auto& m = mit->second;
        auto& v = state.v.at(names[p]);
        const auto& g = grads[p]->value;
        const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
        for (int64_t i = 0; i < value.numel(); ++i) {
            const float gi = g.data[i];
            m.data[i] = b1 * m.data[i] + (1.f - b1) * gi;
            v.data[i] = b2 * v.data[i] + (1.f - b2) * gi * gi;
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            value.data[i] -= static_cast<float>(lr_ * mhat / (std::sqrt(vhat) + eps_));
        }
    }
}

Trainer::Trainer(const Dataset& data, ModelBundle& bundle, TrainingState& state,
                 std::string out_dir)
    : data_(data),
      bundle_(bundle),
      state_(state),
      out_dir_(std::move(out_dir)),
      rng_(bundle.train.seed),
      adam_(bundle.train.lr, bundle.train.beta1, bundle.train.beta2) {
    if (data_.width != bundle_.config.res || data_.height != bundle_.config.res)
        throw ConfigError("Trainer: dataset resolution does not match the model config");
    if (data_.n != bundle_.config.cells)
        throw ConfigError("Trainer: dataset UV cells do not match the model config");

    images_.resize(data_.videos.size());
    train_pool_.resize(data_.videos.size());
    for (size_t v = 0; v < data_.videos.size(); ++v) {
        const auto& clip = data_.videos[v];
        images_[v].reserve(clip.frames.size());
        for (size_t f = 0; f < clip.frames.size(); ++f) {
            images_[v].push_back(load_frame_image(data_, clip.frames[f]));
            if (clip.frames[f].has_kps && !clip.frames[f].validation)
                train_pool_[v].push_back(static_cast<int>(f));
        }
        if (train_pool_[v].size() >= 3) usable_videos_.push_back(static_cast<int>(v));
    }
    if (usable_videos_.empty())
        throw InvalidInput("Trainer: no video has 3 or more usable training frames");

    // fixed validation set: held-out frames bracketed by their nearest
    // training frames; latents frozen at construction
    const int latent_dim = bundle_.config.synth.latent_dim;
    for (size_t v = 0; v < data_.videos.size() &&
                       val_items_.size() < static_cast<size_t>(bundle_.train.val_batch);
         ++v) {
        const auto& clip = data_.videos[v];
        const auto& pool = train_pool_[v];
        if (pool.size() < 2) continue;
        for (size_t f = 0; f < clip.frames.size(); ++f) {
            if (!clip.frames[f].validation || !clip.frames[f].has_kps) continue;
            auto after = std::upper_bound(pool.begin(), pool.end(), static_cast<int>(f));
            if (after == pool.begin() || after == pool.end()) continue;
            ValItem item;
            item.video = static_cast<int>(v);
            item.triplet.source_a = *(after - 1);
            item.triplet.source_b = *after;
            item.triplet.target = static_cast<int>(f);
            item.latent = TensorT<float>({1, latent_dim});
            const uint64_t base = val_items_.size() * static_cast<uint64_t>(latent_dim);
            for (int j = 0; j < latent_dim; ++j)
                item.latent.data[j] = static_cast<float>(rng_.normal(kValLatentStream, base + j));
            val_items_.push_back(std::move(item));
            if (val_items_.size() >= static_cast<size_t>(bundle_.train.val_batch)) break;
        }
    }
    if (val_items_.empty())
        throw InvalidInput("Trainer: no validation frames available (run mark_validation)");

    for (const auto& name : bundle_.params.names()) {
        if (name.rfind("disc.", 0) == 0) {
            disc_names_.push_back(name);
            disc_params_.push_back(bundle_.params.at(name));
        } else {
            gen_names_.push_back(name);
            gen_params_.push_back(bundle_.params.at(name));
        }
    }

    fs::create_directories(out_dir_);
    const fs::path metrics = fs::path(out_dir_) / "metrics.csv";
    if (!fs::exists(metrics))
        write_text_file(metrics.string(), "step,g_loss,d_loss,r1,val_psnr\n");
}

Trainer::SampleInputs Trainer::build_sample(int video, const Triplet& t, int stage) const {
    const auto& clip = data_.videos[video];
    const auto& fa = clip.frames[t.source_a];
    const auto& fb = clip.frames[t.source_b];
    const auto& ft = clip.frames[t.target];
    const int res = bundle_.config.res;
    const double sigma = bundle_.config.sigma();

    KeypointSet target_kps = ft.kps;
    if (stage == 2) {
        target_kps = ablate_target_visibility(ft.kps, {&fa.kps, &fb.kps});
        // a slot surviving ablation must be visible in every source
        for (int i = 0; i < target_kps.num_slots(); ++i)
            assert(!target_kps.slots[i].visible ||
                   (fa.kps.slots[i].visible && fb.kps.slots[i].visible));
    }

    SampleInputs s;
    const auto target_splat = splat_keypoints(target_kps, res, res);
    const auto target_heat = landmark_heatmaps(ft.lms, sigma, res, res);
    s.query = warp::build_query_input(target_splat, target_heat);
    s.cond = TensorT<float>({3, res, res});
    std::copy(target_splat.data.begin(), target_splat.data.end(), s.cond.data.begin());

    const auto& img_a = images_[video][t.source_a];
    const auto& img_b = images_[video][t.source_b];
    s.key_a = warp::build_key_input(splat_keypoints(fa.kps, res, res),
                                    landmark_heatmaps(fa.lms, sigma, res, res), img_a);
    s.key_b = warp::build_key_input(splat_keypoints(fb.kps, res, res),
                                    landmark_heatmaps(fb.lms, sigma, res, res), img_b);
    s.value_a = warp::build_value_input(img_a);
    s.value_b = warp::build_value_input(img_b);

    const auto& timg = images_[video][t.target];
    s.target_pm1.resize(timg.data.size());
    for (size_t i = 0; i < timg.data.size(); ++i) s.target_pm1[i] = 2.f * timg.data[i] - 1.f;
    return s;
}

StepMetrics Trainer::step_once(int stage) {
    const int B = bundle_.train.batch;
    const int latent_dim = bundle_.config.synth.latent_dim;
    const int res = bundle_.config.res;
    const int64_t step = bundle_.step;

    std::vector<TensorT<float>> queries, keys_a, keys_b, values_a, values_b, conds;
    TensorT<float> targets({B, 3, res, res});
    TensorT<float> latents({B, latent_dim});
    for (int i = 0; i < B; ++i) {
        const uint64_t draw = static_cast<uint64_t>(step) * B + i;
        const int video =
            usable_videos_[rng_.below(kVideoStream, draw, usable_videos_.size())];
        const auto& pool = train_pool_[video];
        const Triplet pick =
            sample_triplet(static_cast<int>(pool.size()), rng_, kTripletStream, draw * 3);
        const Triplet t{pool[pick.source_a], pool[pick.source_b], pool[pick.target]};
        auto s = build_sample(video, t, stage);
        std::copy(s.target_pm1.begin(), s.target_pm1.end(),
                  targets.data.begin() + static_cast<int64_t>(i) * 3 * res * res);
        queries.push_back(std::move(s.query));
        keys_a.push_back(std::move(s.key_a));
        keys_b.push_back(std::move(s.key_b));
        values_a.push_back(std::move(s.value_a));
        values_b.push_back(std::move(s.value_b));
        conds.push_back(std::move(s.cond));
        for (int j = 0; j < latent_dim; ++j)
            latents.data[static_cast<int64_t>(i) * latent_dim + j] =
                static_cast<float>(rng_.normal(kLatentStream, draw * latent_dim + j));
    }

    // shared forward graph
    auto qf = bundle_.warpnet.query_enc(ad::constant(warp::stack_batch(queries)));
    auto ka = bundle_.warpnet.key_enc(ad::constant(warp::stack_batch(keys_a)));
    auto kb = bundle_.warpnet.key_enc(ad::constant(warp::stack_batch(keys_b)));
    auto va = bundle_.warpnet.value_enc(ad::constant(warp::stack_batch(values_a)));
    auto vb = bundle_.warpnet.value_enc(ad::constant(warp::stack_batch(values_b)));
    auto attn = warp::cross_attention<float>(qf, {ka, kb}, {va, vb});
    auto gen_in = ad::concat_channels<float>({attn.warped, va, vb});
    auto fake = bundle_.gen(gen_in, ad::constant(latents));

    auto cond = ad::constant(warp::stack_batch(conds));
    auto target_const = ad::constant(targets);

    // discriminator update on a detached fake
    auto real = ad::leaf(std::move(targets));
    auto d_real = bundle_.disc(real, cond);
    auto d_fake_det = bundle_.disc(ad::constant(fake->value), cond);
    auto adv = synth::adversarial_losses(d_real, d_fake_det);
    auto r1 = synth::r1_penalty(d_real, real, static_cast<float>(bundle_.train.r1_gamma));
    auto d_total = ad::add(adv.d_loss, r1);
    auto dgrads = ad::grad(d_total, disc_params_);
    adam_.step(disc_names_, disc_params_, dgrads, state_.disc_opt);

    // generator-side update against the refreshed discriminator
    auto d_fake = bundle_.disc(fake, cond);
    auto g_adv = ad::mean_all(ad::softplus_(ad::neg(d_fake)));
    auto recon = ad::mean_all(ad::abs_(ad::sub(fake, target_const)));
    auto g_total = ad::add(g_adv, ad::scale(recon, static_cast<float>(bundle_.train.l1_weight)));
    auto ggrads = ad::grad(g_total, gen_params_);
    adam_.step(gen_names_, gen_params_, ggrads, state_.gen_opt);

    bundle_.step += 1;

    StepMetrics mtr;
    mtr.step = bundle_.step;
    mtr.g_loss = g_adv->value.data[0];
    mtr.d_loss = adv.d_loss->value.data[0];
    mtr.r1 = r1->value.data[0];
    mtr.val_psnr = validation_psnr();
    return mtr;
}

double Trainer::validation_psnr() {
    ad::GradGuard off(false);
    double total = 0;
    for (const auto& item : val_items_) {
        auto s = build_sample(item.video, item.triplet, 1);
        auto add_batch = [](TensorT<float> t) {
            t.shape.insert(t.shape.begin(), 1);
            return ad::constant(std::move(t));
        };
        auto qf = bundle_.warpnet.query_enc(add_batch(std::move(s.query)));
        auto ka = bundle_.warpnet.key_enc(add_batch(std::move(s.key_a)));
        auto kb = bundle_.warpnet.key_enc(add_batch(std::move(s.key_b)));
        auto va = bundle_.warpnet.value_enc(add_batch(std::move(s.value_a)));
        auto vb = bundle_.warpnet.value_enc(add_batch(std::move(s.value_b)));
        auto attn = warp::cross_attention<float>(qf, {ka, kb}, {va, vb});
        auto fake = bundle_.gen(ad::concat_channels<float>({attn.warped, va, vb}),
                                ad::constant(item.latent));
        double mse = 0;
        for (size_t i = 0; i < s.target_pm1.size(); ++i) {
            const double d = 0.5 * (fake->value.data[i] - s.target_pm1[i]);
            mse += d * d;
        }
        mse /= static_cast<double>(s.target_pm1.size());
        total += mse < 1e-10 ? 99.0 : 10.0 * std::log10(1.0 / mse);
    }
    return total / static_cast<double>(val_items_.size());
}

void Trainer::save(const std::string& name) {
    const fs::path dir = fs::path(out_dir_) / name;
    save_checkpoint(dir.string(), bundle_, &state_);
    latest_checkpoint_ = dir.string();
}

void Trainer::run(int stage, int64_t steps) {
    if (stage != 1 && stage != 2) throw ConfigError("Trainer: stage must be 1 or 2");
    if (stage == 2 && bundle_.step == 0)
        throw ConfigError("Trainer: stage 2 requires a stage-1 checkpoint to start from");
    bundle_.stage = stage;

    std::ofstream metrics(fs::path(out_dir_) / "metrics.csv", std::ios::app);
    if (!metrics) throw IoError("Trainer: cannot append to metrics.csv");

    for (int64_t s = 0; s < steps; ++s) {
        StepMetrics m = step_once(stage);
        if (!finite(m.g_loss) || !finite(m.d_loss) || !finite(m.r1) || !finite(m.val_psnr))
            throw TrainingDiverged("non-finite loss at step " + std::to_string(m.step));
        char row[160];
        std::snprintf(row, sizeof row, "%lld,%.8f,%.8f,%.8f,%.4f\n",
                      static_cast<long long>(m.step), m.g_loss, m.d_loss, m.r1, m.val_psnr);
        metrics << row;
        metrics.flush();
        history_.push_back(m);
        if (bundle_.train.checkpoint_every > 0 &&
            bundle_.step % bundle_.train.checkpoint_every == 0)
            save("ckpt-" + std::to_string(bundle_.step));
    }
    save("ckpt-final");
}

}  // namespace jcut::train
