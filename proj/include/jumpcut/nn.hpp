#pragma once

// Parameter registry and the small set of layers the warp/synth networks are
// built from. Everything is templated on the scalar type so gradient checks
// can run the exact same code at 64-bit precision.

#include <cmath>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "jumpcut/autodiff.hpp"
#include "jumpcut/common.hpp"

namespace jcut::nn {

template <typename S>
class ParamStore {
  public:
    explicit ParamStore(uint64_t seed = 0) : seed_(seed) {}

    // Gaussian init keyed by (seed, fnv1a(name)): the same name always gets
    // the same values for a given store seed, independent of creation order.
    ad::Var<S> normal_init(const std::string& name, std::vector<int64_t> shape, double stddev) {
        Rng rng(seed_);
        const uint64_t stream = fnv1a(name);
        TensorT<S> t(shape);
        for (int64_t i = 0; i < t.numel(); ++i)
            t.data[i] = static_cast<S>(stddev * rng.normal(stream, static_cast<uint64_t>(i)));
        return insert(name, std::move(t));
    }

    ad::Var<S> constant_init(const std::string& name, std::vector<int64_t> shape, S value) {
        return insert(name, TensorT<S>::full(shape, value));
    }

    ad::Var<S> at(const std::string& name) const {
        auto it = map_.find(name);
        if (it == map_.end()) throw ConfigError("ParamStore: unknown parameter " + name);
        return it->second;
    }

    bool contains(const std::string& name) const { return map_.count(name) != 0; }
    const std::vector<std::string>& names() const { return order_; }

    int64_t total_scalars() const {
        int64_t n = 0;
        for (const auto& name : order_) n += map_.at(name)->value.numel();
        return n;
    }

    uint64_t seed() const { return seed_; }

  private:
    ad::Var<S> insert(const std::string& name, TensorT<S> t) {
        if (map_.count(name)) throw ConfigError("ParamStore: duplicate parameter " + name);
        auto v = ad::leaf<S>(std::move(t));
        order_.push_back(name);
        map_.emplace(name, v);
        return v;
    }

    uint64_t seed_;
    std::vector<std::string> order_;
    std::unordered_map<std::string, ad::Var<S>> map_;
};

template <typename S>
ad::Var<S> lrelu(const ad::Var<S>& x) {
    return ad::leaky_relu(x, static_cast<S>(0.2));
}

inline double he_stddev(int64_t fan_in) { return std::sqrt(2.0 / static_cast<double>(fan_in)); }

template <typename S>
struct Conv2d {
    ad::Var<S> w, b;
    int stride = 1, pad = 0;

    Conv2d() = default;
    Conv2d(ParamStore<S>& ps, const std::string& name, int cin, int cout, int k, int stride_,
           int pad_)
        : stride(stride_), pad(pad_) {
        w = ps.normal_init(name + ".w", {cout, cin, k, k},
                           he_stddev(static_cast<int64_t>(cin) * k * k));
        b = ps.constant_init(name + ".b", {cout}, static_cast<S>(0));
    }

    ad::Var<S> operator()(const ad::Var<S>& x) const {
        return ad::bias_add(ad::conv2d(x, w, stride, pad), b);
    }
};

template <typename S>
struct Linear {
    ad::Var<S> w, b;

    Linear() = default;
    Linear(ParamStore<S>& ps, const std::string& name, int in, int out, S bias_init = 0) {
        w = ps.normal_init(name + ".w", {out, in}, he_stddev(in));
        b = ps.constant_init(name + ".b", {out}, bias_init);
    }

    // x [N,in] -> [N,out]
    ad::Var<S> operator()(const ad::Var<S>& x) const {
        return ad::bias_add(ad::matmul(x, w, false, true), b);
    }
};

// conv3x3 + lrelu, conv3x3 stride 2 + lrelu, summed with a 1x1 stride-2 skip
// projection and scaled by 1/sqrt(2); halves the spatial size.
template <typename S>
struct ResBlockDown {
    Conv2d<S> c1, c2, skip;

    ResBlockDown() = default;
    ResBlockDown(ParamStore<S>& ps, const std::string& name, int cin, int cout)
        : c1(ps, name + ".c1", cin, cin, 3, 1, 1),
          c2(ps, name + ".c2", cin, cout, 3, 2, 1),
          skip(ps, name + ".skip", cin, cout, 1, 2, 0) {}

    ad::Var<S> operator()(const ad::Var<S>& x) const {
        auto h = lrelu(c2(lrelu(c1(x))));
        return ad::scale(ad::add(h, skip(x)), static_cast<S>(1.0 / std::sqrt(2.0)));
    }
};

// same-resolution residual block; identity skip when widths match.
template <typename S>
struct ResBlock {
    Conv2d<S> c1, c2;
    std::optional<Conv2d<S>> proj;

    ResBlock() = default;
    ResBlock(ParamStore<S>& ps, const std::string& name, int cin, int cout)
        : c1(ps, name + ".c1", cin, cout, 3, 1, 1), c2(ps, name + ".c2", cout, cout, 3, 1, 1) {
        if (cin != cout) proj.emplace(ps, name + ".skip", cin, cout, 1, 1, 0);
    }

    ad::Var<S> operator()(const ad::Var<S>& x) const {
        auto h = lrelu(c2(lrelu(c1(x))));
        auto s = proj ? (*proj)(x) : x;
        return ad::scale(ad::add(h, s), static_cast<S>(1.0 / std::sqrt(2.0)));
    }
};

// Style-modulated convolution: scales input channels by a per-sample style
// (affine of the style vector, bias centered at 1), convolves with shared
// weights, then rescales each output channel so the expected output magnitude
// is style-independent (demodulation). Stride is always 1.
template <typename S>
struct ModulatedConv2d {
    ad::Var<S> w, b;
    Linear<S> affine;
    int pad = 0;
    bool demodulate = true;

    ModulatedConv2d() = default;
    ModulatedConv2d(ParamStore<S>& ps, const std::string& name, int cin, int cout, int k,
                    int style_dim, bool demodulate_)
        : affine(ps, name + ".affine", style_dim, cin, static_cast<S>(1)),
          pad(k / 2),
          demodulate(demodulate_) {
        w = ps.normal_init(name + ".w", {cout, cin, k, k},
                           he_stddev(static_cast<int64_t>(cin) * k * k));
        b = ps.constant_init(name + ".b", {cout}, static_cast<S>(0));
    }

    // x [N,cin,H,W], style [N,style_dim] -> [N,cout,H,W]
    ad::Var<S> operator()(const ad::Var<S>& x, const ad::Var<S>& style) const {
        const int64_t cout = w->value.dim(0), cin = w->value.dim(1);
        const int64_t ksq = w->value.dim(2) * w->value.dim(3);
        auto s = affine(style);
        auto y = ad::conv2d(ad::scale_channels(x, s), w, 1, pad);
        if (demodulate) {
            // wsq[cout,cin] = sum over the kernel window of w^2
            auto wsq = ad::reshape(ad::sum_rows(ad::reshape(ad::mul(w, w), {cout * cin, ksq})),
                                   {cout, cin});
            auto denom = ad::add_scalar(ad::matmul(ad::mul(s, s), wsq, false, true),
                                        static_cast<S>(1e-8));
            y = ad::scale_channels(y, ad::rsqrt_(denom));
        }
        return ad::bias_add(y, b);
    }
};

}  // namespace jcut::nn
