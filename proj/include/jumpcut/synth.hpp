#pragma once

// Co-modulated generator and conditional discriminator. The generator takes
// the warped feature stacked with both end-frame features at 1/4 resolution,
// refines it through a same-resolution residual trunk with a skip from the
// stem (the only symmetric-resolution pairing available), then decodes with
// exactly two style-modulated upsampling stages to full resolution.

#include <string>
#include <vector>

#include "jumpcut/nn.hpp"
#include "jumpcut/warp.hpp"

namespace jcut::synth {

struct SynthConfig {
    int feature_channels = 192;  // warped + two end-frame features, 3 * d_v
    int trunk = 128;
    int up1 = 96, up2 = 64;  // decoder widths at 1/2 and full resolution
    int latent_dim = 64;
    int latent_hidden = 64;
    int style_dim = 128;
    int disc_width = 64;

    static SynthConfig for_dv(int d_v) {
        SynthConfig c;
        c.feature_channels = 3 * d_v;
        return c;
    }

    static SynthConfig toy() {
        SynthConfig c;
        c.feature_channels = 96;  // d_v = 32
        c.trunk = 64;
        c.up1 = 48;
        c.up2 = 32;
        c.latent_dim = 32;
        c.latent_hidden = 32;
        c.style_dim = 64;
        c.disc_width = 32;
        return c;
    }
};

// concat along the feature axis for [N,F] matrices
template <typename S>
ad::Var<S> concat_features(const ad::Var<S>& a, const ad::Var<S>& b) {
    const int64_t n = a->value.dim(0), fa = a->value.dim(1), fb = b->value.dim(1);
    auto joined = ad::concat_channels<S>(
        {ad::reshape(a, {n, fa, 1, 1}), ad::reshape(b, {n, fb, 1, 1})});
    return ad::reshape(joined, {n, fa + fb});
}

// Style root shared by every modulated layer: concat(pooled global feature,
// two-layer MLP of the latent), then a linear projection.
template <typename S>
struct CoModulation {
    nn::Linear<S> map1, map2, proj;
    int global_dim = 0, latent_dim = 0;

    CoModulation() = default;
    CoModulation(nn::ParamStore<S>& ps, const std::string& name, int global_dim_, int latent_dim_,
                 int hidden, int style_dim)
        : map1(ps, name + ".map1", latent_dim_, hidden),
          map2(ps, name + ".map2", hidden, hidden),
          proj(ps, name + ".proj", global_dim_ + hidden, style_dim),
          global_dim(global_dim_),
          latent_dim(latent_dim_) {}

    // global_feat [N, global_dim], latent [N, latent_dim] -> [N, style_dim]
    ad::Var<S> operator()(const ad::Var<S>& global_feat, const ad::Var<S>& latent) const {
        if (global_feat->value.dim(1) != global_dim || latent->value.dim(1) != latent_dim)
            throw ConfigError("CoModulation: feature/latent dims do not match config");
        auto mapped = map2(nn::lrelu(map1(latent)));
        return proj(concat_features(global_feat, mapped));
    }
};

template <typename S>
struct Generator {
    SynthConfig cfg;
    nn::Conv2d<S> stem;
    nn::ResBlock<S> block1, block2;
    nn::Conv2d<S> stem_skip;
    CoModulation<S> comod;
    nn::ModulatedConv2d<S> up1_conv, up2_conv, to_rgb;

    Generator() = default;
    Generator(nn::ParamStore<S>& ps, const SynthConfig& c)
        : cfg(c),
          stem(ps, "gen.stem", c.feature_channels, c.trunk, 3, 1, 1),
          block1(ps, "gen.block1", c.trunk, c.trunk),
          block2(ps, "gen.block2", c.trunk, c.trunk),
          stem_skip(ps, "gen.skip", c.feature_channels, c.trunk, 1, 1, 0),
          comod(ps, "gen.comod", c.feature_channels, c.latent_dim, c.latent_hidden, c.style_dim),
          up1_conv(ps, "gen.up1", c.trunk, c.up1, 3, c.style_dim, true),
          up2_conv(ps, "gen.up2", c.up1, c.up2, 3, c.style_dim, true),
          to_rgb(ps, "gen.rgb", c.up2, 3, 1, c.style_dim, false) {}

    // features [N, feature_channels, h, w], latent [N, latent_dim]
    // -> [N, 3, 4h, 4w] in [-1, 1]
    ad::Var<S> operator()(const ad::Var<S>& features, const ad::Var<S>& latent) const {
        if (features->value.rank() != 4 || features->value.dim(1) != cfg.feature_channels)
            throw ConfigError("Generator: feature channel mismatch");
        if (latent->value.rank() != 2 || latent->value.dim(1) != cfg.latent_dim)
            throw ConfigError("Generator: latent dim mismatch");
        auto style = comod(ad::avgpool_global(features), latent);
        auto h = block2(block1(nn::lrelu(stem(features))));
        h = ad::scale(ad::add(h, stem_skip(features)), static_cast<S>(1.0 / std::sqrt(2.0)));
        h = nn::lrelu(up1_conv(ad::upsample2x(h), style));
        h = nn::lrelu(up2_conv(ad::upsample2x(h), style));
        return ad::tanh_(to_rgb(h, style));
    }
};

// Realism score for an image conditioned on the target's splatted IUV map.
template <typename S>
struct Discriminator {
    nn::Conv2d<S> stem;
    nn::ResBlockDown<S> down1, down2;
    nn::Conv2d<S> post;
    nn::Linear<S> head;

    Discriminator() = default;
    Discriminator(nn::ParamStore<S>& ps, const SynthConfig& c)
        : stem(ps, "disc.stem", 6, c.disc_width, 3, 1, 1),
          down1(ps, "disc.down1", c.disc_width, 2 * c.disc_width),
          down2(ps, "disc.down2", 2 * c.disc_width, 4 * c.disc_width),
          post(ps, "disc.post", 4 * c.disc_width, 4 * c.disc_width, 3, 1, 1),
          head(ps, "disc.head", 4 * c.disc_width, 1) {}

    // image [N,3,H,W] in [-1,1], cond [N,3,H,W] -> logits [N,1]
    ad::Var<S> operator()(const ad::Var<S>& image, const ad::Var<S>& cond) const {
        if (image->value.shape != cond->value.shape)
            throw ConfigError("Discriminator: image/condition shape mismatch");
        auto h = nn::lrelu(stem(ad::concat_channels<S>({image, cond})));
        h = down2(down1(h));
        h = nn::lrelu(post(h));
        return head(ad::avgpool_global(h));
    }
};

// Non-saturating logistic losses averaged over the batch.
template <typename S>
struct AdvLosses {
    ad::Var<S> d_loss, g_loss;
};

template <typename S>
AdvLosses<S> adversarial_losses(const ad::Var<S>& real_logits, const ad::Var<S>& fake_logits) {
    AdvLosses<S> out;
    out.d_loss = ad::add(ad::mean_all(ad::softplus_(ad::neg(real_logits))),
                         ad::mean_all(ad::softplus_(fake_logits)));
    out.g_loss = ad::mean_all(ad::softplus_(ad::neg(fake_logits)));
    return out;
}

// (gamma/2) * mean over the batch of the squared gradient norm of the summed
// real logits w.r.t. the real images. real_logits must be built on top of the
// real_images leaf; keeps the graph so the penalty is differentiable.
template <typename S>
ad::Var<S> r1_penalty(const ad::Var<S>& real_logits, const ad::Var<S>& real_images, S gamma) {
    auto g = ad::grad(ad::sum_all(real_logits), {real_images}, /*create_graph=*/true)[0];
    const S batch = static_cast<S>(real_images->value.dim(0));
    return ad::scale(ad::sum_all(ad::mul(g, g)), gamma / (2 * batch));
}

}  // namespace jcut::synth
