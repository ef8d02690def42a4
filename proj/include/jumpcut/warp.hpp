#pragma once

// Cross-modal attention warping: three encoders (query/key/value) at 1/4
// input resolution and scaled dot-product attention over all source
// locations. Feature grids are [N, C, h, w] autodiff vars.

#include <optional>
#include <string>
#include <vector>

#include "jumpcut/geometry.hpp"
#include "jumpcut/image.hpp"
#include "jumpcut/nn.hpp"

namespace jcut::warp {

struct WarpNetConfig {
    int query_channels = 3 + kLandmarkCount;  // splatted IUV + landmark heatmaps
    int key_channels = 3 + kLandmarkCount + 3;  // + source RGB
    int value_channels = 3;
    int w1 = 32, w2 = 64, w3 = 128;
    int d_k = 64;
    int d_v = 64;

    static WarpNetConfig toy() {
        WarpNetConfig c;
        c.w1 = 16;
        c.w2 = 32;
        c.w3 = 64;
        c.d_k = 32;
        c.d_v = 32;
        return c;
    }
};

// stem conv, two stride-2 residual blocks (so the grid sits at 1/4 input
// resolution), a post conv, and a linear 1x1 projection to the target dim.
template <typename S>
struct Encoder {
    nn::Conv2d<S> stem;
    nn::ResBlockDown<S> down1, down2;
    nn::Conv2d<S> post;
    nn::Conv2d<S> proj;
    int in_channels = 0;

    Encoder() = default;
    Encoder(nn::ParamStore<S>& ps, const std::string& name, int cin, int w1, int w2, int w3, int d)
        : stem(ps, name + ".stem", cin, w1, 3, 1, 1),
          down1(ps, name + ".down1", w1, w2),
          down2(ps, name + ".down2", w2, w3),
          post(ps, name + ".post", w3, w3, 3, 1, 1),
          proj(ps, name + ".proj", w3, d, 1, 1, 0),
          in_channels(cin) {}

    ad::Var<S> operator()(const ad::Var<S>& x) const {
        if (x->value.rank() != 4 || x->value.dim(1) != in_channels)
            throw ConfigError("Encoder: expected " + std::to_string(in_channels) + " channels");
        if (x->value.dim(2) % 4 != 0 || x->value.dim(3) % 4 != 0)
            throw ConfigError("Encoder: spatial size must be divisible by 4");
        auto h = nn::lrelu(stem(x));
        h = down1(h);
        h = down2(h);
        h = nn::lrelu(post(h));
        return proj(h);  // linear: zero weights+bias give an all-zero grid
    }
};

template <typename S>
struct WarpNet {
    WarpNetConfig cfg;
    Encoder<S> query_enc, key_enc, value_enc;

    WarpNet() = default;
    WarpNet(nn::ParamStore<S>& ps, const WarpNetConfig& c)
        : cfg(c),
          query_enc(ps, "warp.query", c.query_channels, c.w1, c.w2, c.w3, c.d_k),
          key_enc(ps, "warp.key", c.key_channels, c.w1, c.w2, c.w3, c.d_k),
          value_enc(ps, "warp.value", c.value_channels, c.w1, c.w2, c.w3, c.d_v) {}
};

template <typename S>
struct AttentionResult {
    ad::Var<S> warped;                      // [N, d_v, h_q, w_q]
    std::optional<TensorT<S>> weights;      // [N, n_q, n_k], detached copy
};

// Softmax(Q Kt / sqrt(d_k)) V with keys/values of all sources concatenated
// along the location axis. Each (K,V) pair must agree spatially; sources may
// differ in grid size.
template <typename S>
AttentionResult<S> cross_attention(const ad::Var<S>& q, const std::vector<ad::Var<S>>& ks,
                                   const std::vector<ad::Var<S>>& vs, bool want_weights = false) {
    if (ks.empty() || ks.size() != vs.size())
        throw ConfigError("cross_attention: need at least one (key, value) source pair");
    const int64_t n = q->value.dim(0), dk = q->value.dim(1);
    const int64_t hq = q->value.dim(2), wq = q->value.dim(3);
    const int64_t dv = vs[0]->value.dim(1);
    for (size_t s = 0; s < ks.size(); ++s) {
        if (ks[s]->value.dim(1) != dk)
            throw ConfigError("cross_attention: key channel dim must match query");
        if (vs[s]->value.dim(1) != dv)
            throw ConfigError("cross_attention: value channel dims must agree");
        if (ks[s]->value.dim(0) != n || vs[s]->value.dim(0) != n ||
            ks[s]->value.dim(2) != vs[s]->value.dim(2) || ks[s]->value.dim(3) != vs[s]->value.dim(3))
            throw ConfigError("cross_attention: key/value grids must pair up");
    }
    const int64_t nq = hq * wq;
    int64_t nk = 0;
    for (const auto& k : ks) nk += k->value.dim(2) * k->value.dim(3);

    const S inv_sqrt_dk = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dk)));
    std::optional<TensorT<S>> weights;
    if (want_weights) weights.emplace(TensorT<S>::zeros({n, nq, nk}));

    std::vector<ad::Var<S>> out_samples;
    out_samples.reserve(n);
    for (int64_t i = 0; i < n; ++i) {
        auto qm = ad::transpose2d(ad::reshape(ad::slice_dim0(q, i, 1), {dk, nq}));  // [nq, dk]
        std::vector<ad::Var<S>> krows, vrows;
        for (size_t s = 0; s < ks.size(); ++s) {
            const int64_t loc = ks[s]->value.dim(2) * ks[s]->value.dim(3);
            krows.push_back(ad::transpose2d(ad::reshape(ad::slice_dim0(ks[s], i, 1), {dk, loc})));
            vrows.push_back(ad::transpose2d(ad::reshape(ad::slice_dim0(vs[s], i, 1), {dv, loc})));
        }
        auto kcat = ad::concat_dim0(krows);  // [nk, dk]
        auto vcat = ad::concat_dim0(vrows);  // [nk, dv]
        auto logits = ad::scale(ad::matmul(qm, kcat, false, true), inv_sqrt_dk);
        auto attn = ad::softmax_rows(logits);  // [nq, nk]
        if (want_weights)
            std::copy(attn->value.data.begin(), attn->value.data.end(),
                      weights->data.begin() + i * nq * nk);
        auto mixed = ad::matmul(attn, vcat);  // [nq, dv]
        out_samples.push_back(ad::reshape(ad::transpose2d(mixed), {1, dv, hq, wq}));
    }
    AttentionResult<S> res;
    res.warped = out_samples.size() == 1 ? out_samples[0] : ad::concat_dim0(out_samples);
    res.weights = std::move(weights);
    return res;
}

struct AttentionPeak {
    int query_r = 0, query_c = 0;
    int source = 0;
    int loc_r = 0, loc_c = 0;
    double score = 0;
};

// One entry per query row whose maximum probability reaches the threshold.
// Assumes all sources share the query's grid shape (the pipeline's case).
template <typename S>
std::vector<AttentionPeak> attention_peaks(const TensorT<S>& weights, double threshold, int grid_h,
                                           int grid_w, int num_sources) {
    if (weights.rank() != 2) throw ConfigError("attention_peaks: rank-2 weights required");
    const int64_t nq = weights.dim(0), nk = weights.dim(1);
    const int64_t per_source = static_cast<int64_t>(grid_h) * grid_w;
    if (nq != per_source || nk != per_source * num_sources)
        throw ConfigError("attention_peaks: weights shape does not match grid");
    std::vector<AttentionPeak> peaks;
    for (int64_t qi = 0; qi < nq; ++qi) {
        const S* row = weights.ptr() + qi * nk;
        int64_t best = 0;
        for (int64_t j = 1; j < nk; ++j)
            if (row[j] > row[best]) best = j;
        if (static_cast<double>(row[best]) < threshold) continue;
        AttentionPeak p;
        p.query_r = static_cast<int>(qi / grid_w);
        p.query_c = static_cast<int>(qi % grid_w);
        p.source = static_cast<int>(best / per_source);
        const int64_t loc = best % per_source;
        p.loc_r = static_cast<int>(loc / grid_w);
        p.loc_c = static_cast<int>(loc % grid_w);
        p.score = static_cast<double>(row[best]);
        peaks.push_back(p);
    }
    return peaks;
}

// Channel stacks fed to the encoders. Images enter network space as [-1,1].
TensorT<float> build_query_input(const DiscretizedIUV& iuv, const HeatmapStack& heat);
TensorT<float> build_key_input(const DiscretizedIUV& iuv, const HeatmapStack& heat,
                               const Image& img);
TensorT<float> build_value_input(const Image& img);

// [C,H,W] samples -> [N,C,H,W]
TensorT<float> stack_batch(const std::vector<TensorT<float>>& samples);

}  // namespace jcut::warp
