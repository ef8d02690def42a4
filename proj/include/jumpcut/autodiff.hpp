#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "jumpcut/tensor.hpp"

namespace jcut::ad {

// Define-by-run reverse-mode tape. Values are computed eagerly; each recorded
// node carries a vjp that is itself expressed through tape ops, so gradients
// of gradients (needed by the R1 penalty) come out of the same machinery.

template <typename S>
struct Node;
template <typename S>
using Var = std::shared_ptr<Node<S>>;

template <typename S>
struct Node {
    TensorT<S> value;
    bool requires_grad = false;
    std::vector<Var<S>> parents;
    // Called with (self, upstream grad); returns one grad per parent (may be null).
    std::function<std::vector<Var<S>>(const Var<S>&, const Var<S>&)> vjp;
};

struct GradMode {
    static bool& flag() {
        thread_local bool f = true;
        return f;
    }
};

struct GradGuard {
    bool prev;
    explicit GradGuard(bool enable) : prev(GradMode::flag()) { GradMode::flag() = enable; }
    ~GradGuard() { GradMode::flag() = prev; }
};

template <typename S>
Var<S> constant(TensorT<S> v) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(v);
    return n;
}

template <typename S>
Var<S> leaf(TensorT<S> v, bool requires_grad = true) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    return n;
}

template <typename S>
Var<S> scalar_const(S v) {
    return constant(TensorT<S>::scalar(v));
}

namespace detail {

template <typename S>
bool any_requires(const std::vector<Var<S>>& ps) {
    for (const auto& p : ps)
        if (p && p->requires_grad) return true;
    return false;
}

template <typename S>
Var<S> make_op(TensorT<S> value, std::vector<Var<S>> parents,
               std::function<std::vector<Var<S>>(const Var<S>&, const Var<S>&)> vjp) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(value);
    if (GradMode::flag() && any_requires(parents)) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->vjp = std::move(vjp);
    }
    return n;
}

template <typename S>
void check_same_shape(const Var<S>& a, const Var<S>& b, const char* op) {
    if (a->value.shape != b->value.shape)
        throw ConfigError(std::string(op) + ": shape mismatch");
}

}  // namespace detail

// ---- elementwise ----

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
    detail::check_same_shape(a, b, "add");
    TensorT<S> out(a->value.shape);
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out.data[i] = a->value.data[i] + b->value.data[i];
    return detail::make_op<S>(std::move(out), {a, b},
                              [](const Var<S>&, const Var<S>& g) -> std::vector<Var<S>> {
                                  return {g, g};
                              });
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b);

template <typename S>
Var<S> neg(const Var<S>& a) {
    TensorT<S> out(a->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] = -a->value.data[i];
    return detail::make_op<S>(std::move(out), {a},
                              [](const Var<S>&, const Var<S>& g) -> std::vector<Var<S>> {
                                  return {neg(g)};
                              });
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
    detail::check_same_shape(a, b, "sub");
    TensorT<S> out(a->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] = a->value.data[i] - b->value.data[i];
    return detail::make_op<S>(std::move(out), {a, b},
                              [](const Var<S>&, const Var<S>& g) -> std::vector<Var<S>> {
                                  return {g, neg(g)};
                              });
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
    detail::check_same_shape(a, b, "mul");
    TensorT<S> out(a->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] = a->value.data[i] * b->value.data[i];
    return detail::make_op<S>(std::move(out), {a, b},
                              [](const Var<S>& self, const Var<S>& g) -> std::vector<Var<S>> {
                                  return {mul(g, self->parents[1]), mul(g, self->parents[0])};
                              });
}

template <typename S>
Var<S> scale(const Var<S>& a, S c) {
    TensorT<S> out(a->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] = a->value.data[i] * c;
    return detail::make_op<S>(std::move(out), {a},
                              [c](const Var<S>&, const Var<S>& g) -> std::vector<Var<S>> {
                                  return {scale(g, c)};
                              });
}

template <typename S>
Var<S> add_scalar(const Var<S>& a, S c) {
    TensorT<S> out(a->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] = a->value.data[i] + c;
    return detail::make_op<S>(std::move(out), {a},
                              [](const Var<S>&, const Var<S>& g) -> std::vector<Var<S>> {
                                  return {g};
                              });
}

// ---- nonlinearities ----

template <typename S>
Var<S> leaky_relu_grad(const Var<S>& x, const Var<S>& gy, S slope);

template <typename S>
Var<S> leaky_relu(const Var<S>& x, S slope) {
    TensorT<S> out(x->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) {
        S v = x->value.data[i];
        out.data[i] = v > S(0) ? v : slope * v;
    }
    return detail::make_op<S>(std::move(out), {x},
                              [slope](const Var<S>& self, const Var<S>& g) -> std::vector<Var<S>> {
                                  return {leaky_relu_grad(self->parents[0], g, slope)};
                              });
}

// gy masked by the slope pattern of x; derivative wrt x is zero a.e.
template <typename S>
Var<S> leaky_relu_grad(const Var<S>& x, const Var<S>& gy, S slope) {
    detail::check_same_shape(x, gy, "leaky_relu_grad");
    TensorT<S> out(x->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i)
        out.data[i] = x->value.data[i] > S(0) ? gy->value.data[i] : slope * gy->value.data[i];
    return detail::make_op<S>(std::move(out), {x, gy},
                              [slope](const Var<S>& self, const Var<S>& g) -> std::vector<Var<S>> {
                                  return {nullptr, leaky_relu_grad(self->parents[0], g, slope)};
                              });
}

template <typename S>
Var<S> tanh_(const Var<S>& x) {
    TensorT<S> out(x->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] = std::tanh(x->value.data[i]);
    return detail::make_op<S>(std::move(out), {x},
                              [](const Var<S>& self, const Var<S>& g) -> std::vector<Var<S>> {
                                  auto y2 = mul(self, self);
                                  return {sub(g, mul(g, y2))};
                              });
}

template <typename S>
Var<S> sigmoid_(const Var<S>& x) {
    TensorT<S> out(x->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) {
        S v = x->value.data[i];
        out.data[i] = v >= S(0) ? S(1) / (S(1) + std::exp(-v)) : std::exp(v) / (S(1) + std::exp(v));
    }
    return detail::make_op<S>(std::move(out), {x},
                              [](const Var<S>& self, const Var<S>& g) -> std::vector<Var<S>> {
                                  auto one_minus = add_scalar(neg(self), S(1));
                                  return {mul(mul(g, self), one_minus)};
                              });
}

template <typename S>
Var<S> softplus_(const Var<S>& x) {
    TensorT<S> out(x->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) {
        S v = x->value.data[i];
        out.data[i] = v > S(20) ? v : std::log1p(std::exp(std::min(v, S(20))));
    }
    return detail::make_op<S>(std::move(out), {x},
                              [](const Var<S>& self, const Var<S>& g) -> std::vector<Var<S>> {
                                  return {mul(g, sigmoid_(self->parents[0]))};
                              });
}

template <typename S>
Var<S> abs_(const Var<S>& x) {
    TensorT<S> out(x->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] = std::abs(x->value.data[i]);
    return detail::make_op<S>(std::move(out), {x},
                              [](const Var<S>& self, const Var<S>& g) -> std::vector<Var<S>> {
                                  const auto& xv = self->parents[0]->value;
                                  TensorT<S> sign(xv.shape);
                                  for (int64_t i = 0; i < sign.numel(); ++i)
                                      sign.data[i] = xv.data[i] >= S(0) ? S(1) : S(-1);
                                  return {mul(g, constant(std::move(sign)))};
                              });
}

template <typename S>
Var<S> sqrt_(const Var<S>& x);

template <typename S>
Var<S> rsqrt_(const Var<S>& x) {
    TensorT<S> out(x->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] = S(1) / std::sqrt(x->value.data[i]);
    return detail::make_op<S>(std::move(out), {x},
                              [](const Var<S>& self, const Var<S>& g) -> std::vector<Var<S>> {
                                  auto y3 = mul(self, mul(self, self));
                                  return {scale(mul(g, y3), S(-0.5))};
                              });
}

template <typename S>
Var<S> sqrt_(const Var<S>& x) {
    TensorT<S> out(x->value.shape);
    for (int64_t i = 0; i < out.numel(); ++i) out.data[i] = std::sqrt(x->value.data[i]);
    return detail::make_op<S>(std::move(out), {x},
                              [](const Var<S>& self, const Var<S>& g) -> std::vector<Var<S>> {
                                  return {scale(mul(g, rsqrt_(self->parents[0])), S(0.5))};
                              });
}

// ---- reductions / broadcasts ----

template <typename S>
Var<S> broadcast_all(const Var<S>& s, const std::vector<int64_t>& shape);

template <typename S>
Var<S> sum_all(const Var<S>& x) {
    S acc = 0;
    for (int64_t i = 0; i < x->value.numel(); ++i) acc += x->value.data[i];
    return detail::make_op<S>(TensorT<S>::scalar(acc), {x},
                              [](const Var<S>& self, const Var<S>& g) -> std::vector<Var<S>> {
                                  return {broadcast_all(g, self->parents[0]->value.shape)};
                              });
}

template <typename S>
Var<S> broadcast_all(const Var<S>& s, const std::vector<int64_t>& shape) {
    if (s->value.numel() != 1) throw ConfigError("broadcast_all: source must be scalar");
    TensorT<S> out = TensorT<S>::full(shape, s->value.data[0]);
    return detail::make_op<S>(std::move(out), {s},
                              [](const Var<S>&, const Var<S>& g) -> std::vector<Var<S>> {
                                  return {sum_all(g)};
                              });
}

template <typename S>
Var<S> mean_all(const Var<S>& x) {
    return scale(sum_all(x), S(1) / S(x->value.numel()));
}

template <typename S>
Var<S> broadcast_cols(const Var<S>& v, int64_t k);

// [M,K] -> [M]
template <typename S>
Var<S> sum_rows(const Var<S>& x) {
    if (x->value.rank() != 2) throw ConfigError("sum_rows: rank-2 input required");
    const int64_t m = x->value.dim(0), k = x->value.dim(1);
    TensorT<S> out({m});
    for (int64_t i = 0; i < m; ++i) {
        S acc = 0;
        const S* row = x->value.ptr() + i * k;
        for (int64_t j = 0; j < k; ++j) acc += row[j];
        out.data[i] = acc;
    }
    return detail::make_op<S>(std::move(out), {x},
                              [k](const Var<S>&, const Var<S>& g) -> std::vector<Var<S>> {
                                  return {broadcast_cols(g, k)};
                              });
}

// [M] -> [M,K]
template <typename S>
Var<S> broadcast_cols(const Var<S>& v, int64_t k) {
    if (v->value.rank() != 1) throw ConfigError("broadcast_cols: rank-1 input required");
    const int64_t m = v->value.dim(0);
    TensorT<S> out({m, k});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < k; ++j) out.data[i * k + j] = v->value.data[i];
    return detail::make_op<S>(std::move(out), {v},
                              [](const Var<S>&, const Var<S>& g) -> std::vector<Var<S>> {
                                  return {sum_rows(g)};
                              });
}

template <typename S>
Var<S> broadcast_spatial(const Var<S>& v, int64_t h, int64_t w);

// [N,C,H,W] -> [N,C]
template <typename S>
Var<S> spatial_sum(const Var<S>& x) {
    if (x->value.rank() != 4) throw ConfigError("spatial_sum: rank-4 input required");
    const int64_t n = x->value.dim(0), c = x->value.dim(1), hw = x->value.dim(2) * x->value.dim(3);
    const int64_t h = x->value.dim(2), w = x->value.dim(3);
    TensorT<S> out({n, c});
    for (int64_t i = 0; i < n * c; ++i) {
        S acc = 0;
        const S* p = x->value.ptr() + i * hw;
        for (int64_t j = 0; j < hw; ++j) acc += p[j];
        out.data[i] = acc;
    }
    return detail::make_op<S>(std::move(out), {x},
                              [h, w](const Var<S>&, const Var<S>& g) -> std::vector<Var<S>> {
                                  return {broadcast_spatial(g, h, w)};
                              });
}

// [N,C] -> [N,C,H,W]
template <typename S>
Var<S> broadcast_spatial(const Var<S>& v, int64_t h, int64_t w) {
    if (v->value.rank() != 2) throw ConfigError("broadcast_spatial: rank-2 input required");
    const int64_t n = v->value.dim(0), c = v->value.dim(1);
    TensorT<S> out({n, c, h, w});
    const int64_t hw = h * w;
    for (int64_t i = 0; i < n * c; ++i) {
        S* p = out.ptr() + i * hw;
        const S val = v->value.data[i];
        for (int64_t j = 0; j < hw; ++j) p[j] = val;
    }
    return detail::make_op<S>(std::move(out), {v},
                              [](const Var<S>&, const Var<S>& g) -> std::vector<Var<S>> {
                                  return {spatial_sum(g)};
                              });
}

template <typename S>
Var<S> avgpool_global(const Var<S>& x) {
    const S inv = S(1) / S(x->value.dim(2) * x->value.dim(3));
    return scale(spatial_sum(x), inv);
}

// ---- shape ops ----

template <typename S>
Var<S> reshape(const Var<S>& x, std::vector<int64_t> shape) {
    if (TensorT<S>::numel_of(shape) != x->value.numel()) throw ConfigError("reshape: numel mismatch");
    TensorT<S> out(shape, x->value.data);
    auto old_shape = x->value.shape;
    return detail::make_op<S>(std::move(out), {x},
                              [old_shape](const Var<S>&, const Var<S>& g) -> std::vector<Var<S>> {
                                  return {reshape(g, old_shape)};
                              });
}

template <typename S>
Var<S> transpose2d(const Var<S>& x) {
    if (x->value.rank() != 2) throw ConfigError("transpose2d: rank-2 input required");
    const int64_t m = x->value.dim(0), n = x->value.dim(1);
    TensorT<S> out({n, m});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out.data[j * m + i] = x->value.data[i * n + j];
    return detail::make_op<S>(std::move(out), {x},
                              [](const Var<S>&, const Var<S>& g) -> std::vector<Var<S>> {
                                  return {transpose2d(g)};
                              });
}

template <typename S>
Var<S> slice_dim0(const Var<S>& x, int64_t begin, int64_t count);

// Concatenate along axis 0 (any equal trailing shape).
template <typename S>
Var<S> concat_dim0(const std::vector<Var<S>>& parts) {
    if (parts.empty()) throw ConfigError("concat_dim0: empty input");
    std::vector<int64_t> tail(parts[0]->value.shape.begin() + 1, parts[0]->value.shape.end());
    int64_t total = 0;
    for (const auto& p : parts) {
        std::vector<int64_t> t(p->value.shape.begin() + 1, p->value.shape.end());
        if (t != tail) throw ConfigError("concat_dim0: trailing shape mismatch");
        total += p->value.dim(0);
    }
    std::vector<int64_t> shape = {total};
    shape.insert(shape.end(), tail.begin(), tail.end());
    TensorT<S> out(shape);
    int64_t off = 0;
    std::vector<int64_t> counts;
    for (const auto& p : parts) {
        std::copy(p->value.data.begin(), p->value.data.end(), out.data.begin() + off);
        off += p->value.numel();
        counts.push_back(p->value.dim(0));
    }
    return detail::make_op<S>(std::move(out), parts,
                              [counts](const Var<S>&, const Var<S>& g) -> std::vector<Var<S>> {
                                  std::vector<Var<S>> grads;
                                  int64_t at = 0;
                                  for (int64_t c : counts) {
                                      grads.push_back(slice_dim0(g, at, c));
                                      at += c;
                                  }
                                  return grads;
                              });
}

template <typename S>
Var<S> pad_dim0(const Var<S>& x, int64_t begin, int64_t total);

template <typename S>
Var<S> slice_dim0(const Var<S>& x, int64_t begin, int64_t count) {
    const auto& sh = x->value.shape;
    if (begin < 0 || begin + count > sh[0]) throw ConfigError("slice_dim0: out of range");
    const int64_t inner = x->value.numel() / sh[0];
    std::vector<int64_t> shape = sh;
    shape[0] = count;
    TensorT<S> out(shape);
    std::copy(x->value.data.begin() + begin * inner, x->value.data.begin() + (begin + count) * inner,
              out.data.begin());
    const int64_t full = sh[0];
    return detail::make_op<S>(std::move(out), {x},
                              [begin, full](const Var<S>&, const Var<S>& g) -> std::vector<Var<S>> {
                                  return {pad_dim0(g, begin, full)};
                              });
}

// Zero-pad along dim0 so that x occupies [begin, begin+count) of `total` rows.
template <typename S>
Var<S> pad_dim0(const Var<S>& x, int64_t begin, int64_t total) {
    const int64_t count = x->value.dim(0);
    const int64_t inner = x->value.numel() / count;
    std::vector<int64_t> shape = x->value.shape;
    shape[0] = total;
    TensorT<S> out(shape);
    std::copy(x->value.data.begin(), x->value.data.end(), out.data.begin() + begin * inner);
    return detail::make_op<S>(std::move(out), {x},
                              [begin, count](const Var<S>&, const Var<S>& g) -> std::vector<Var<S>> {
                                  return {slice_dim0(g, begin, count)};
                              });
}

template <typename S>
Var<S> slice_channels(const Var<S>& x, int64_t begin, int64_t count);

// Concatenate [N,C_i,H,W] blocks along the channel axis.
template <typename S>
Var<S> concat_channels(const std::vector<Var<S>>& parts) {
    if (parts.empty()) throw ConfigError("concat_channels: empty input");
    const int64_t n = parts[0]->value.dim(0), h = parts[0]->value.dim(2), w = parts[0]->value.dim(3);
    int64_t total_c = 0;
    for (const auto& p : parts) {
        if (p->value.rank() != 4 || p->value.dim(0) != n || p->value.dim(2) != h ||
            p->value.dim(3) != w)
            throw ConfigError("concat_channels: incompatible shapes");
        total_c += p->value.dim(1);
    }
    TensorT<S> out({n, total_c, h, w});
    const int64_t hw = h * w;
    std::vector<int64_t> counts;
    int64_t c_off = 0;
    for (const auto& p : parts) {
        const int64_t pc = p->value.dim(1);
        for (int64_t i = 0; i < n; ++i)
            std::copy(p->value.data.begin() + i * pc * hw, p->value.data.begin() + (i + 1) * pc * hw,
                      out.data.begin() + (i * total_c + c_off) * hw);
        c_off += pc;
        counts.push_back(pc);
    }
    return detail::make_op<S>(std::move(out), parts,
                              [counts](const Var<S>&, const Var<S>& g) -> std::vector<Var<S>> {
                                  std::vector<Var<S>> grads;
                                  int64_t at = 0;
                                  for (int64_t c : counts) {
                                      grads.push_back(slice_channels(g, at, c));
                                      at += c;
                                  }
                                  return grads;
                              });
}

template <typename S>
Var<S> pad_channels(const Var<S>& x, int64_t begin, int64_t total);

template <typename S>
Var<S> slice_channels(const Var<S>& x, int64_t begin, int64_t count) {
    if (x->value.rank() != 4) throw ConfigError("slice_channels: rank-4 input required");
    const int64_t n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
    if (begin < 0 || begin + count > c) throw ConfigError("slice_channels: out of range");
    TensorT<S> out({n, count, h, w});
    const int64_t hw = h * w;
    for (int64_t i = 0; i < n; ++i)
        std::copy(x->value.data.begin() + (i * c + begin) * hw,
                  x->value.data.begin() + (i * c + begin + count) * hw,
                  out.data.begin() + i * count * hw);
    return detail::make_op<S>(std::move(out), {x},
                              [begin, c](const Var<S>&, const Var<S>& g) -> std::vector<Var<S>> {
                                  return {pad_channels(g, begin, c)};
                              });
}

// Zero-pad channels so that x occupies [begin, begin+C) of `total` channels.
template <typename S>
Var<S> pad_channels(const Var<S>& x, int64_t begin, int64_t total) {
    const int64_t n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
    TensorT<S> out({n, total, h, w});
    const int64_t hw = h * w;
    for (int64_t i = 0; i < n; ++i)
        std::copy(x->value.data.begin() + i * c * hw, x->value.data.begin() + (i + 1) * c * hw,
                  out.data.begin() + (i * total + begin) * hw);
    return detail::make_op<S>(std::move(out), {x},
                              [begin, c](const Var<S>&, const Var<S>& g) -> std::vector<Var<S>> {
                                  return {slice_channels(g, begin, c)};
                              });
}

// ---- matmul ----

template <typename S>
Var<S> matmul(const Var<S>& a, const Var<S>& b, bool ta = false, bool tb = false) {
    if (a->value.rank() != 2 || b->value.rank() != 2) throw ConfigError("matmul: rank-2 required");
    const int64_t m = ta ? a->value.dim(1) : a->value.dim(0);
    const int64_t ka = ta ? a->value.dim(0) : a->value.dim(1);
    const int64_t kb = tb ? b->value.dim(1) : b->value.dim(0);
    const int64_t n = tb ? b->value.dim(0) : b->value.dim(1);
    if (ka != kb) throw ConfigError("matmul: inner dimension mismatch");
    TensorT<S> out({m, n});
    gemm(ta, tb, static_cast<int>(m), static_cast<int>(n), static_cast<int>(ka), S(1),
         a->value.ptr(), static_cast<int>(a->value.dim(1)), b->value.ptr(),
         static_cast<int>(b->value.dim(1)), S(0), out.ptr(), static_cast<int>(n));
    return detail::make_op<S>(
        std::move(out), {a, b},
        [ta, tb](const Var<S>& self, const Var<S>& g) -> std::vector<Var<S>> {
            const auto& a = self->parents[0];
            const auto& b = self->parents[1];
            Var<S> da = ta ? matmul(b, g, tb, true) : matmul(g, b, false, !tb);
            Var<S> db = tb ? matmul(g, a, true, ta) : matmul(a, g, !ta, false);
            return {da, db};
        });
}

// ---- convolution family (closed under differentiation) ----

template <typename S>
Var<S> conv2d_input_grad(const Var<S>& w, const Var<S>& gy, int stride, int pad, int in_h, int in_w);
template <typename S>
Var<S> conv2d_weight_grad(const Var<S>& x, const Var<S>& gy, int stride, int pad, int kh, int kw);

// x [N,Cin,H,W] (cross-)correlated with w [Cout,Cin,kh,kw]
template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, int stride, int pad) {
    if (x->value.rank() != 4 || w->value.rank() != 4) throw ConfigError("conv2d: rank-4 required");
    const int64_t n = x->value.dim(0), cin = x->value.dim(1), h = x->value.dim(2),
                  ww = x->value.dim(3);
    const int64_t cout = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
    if (w->value.dim(1) != cin) throw ConfigError("conv2d: channel mismatch");
    const int oh = conv_out_size(static_cast<int>(h), static_cast<int>(kh), stride, pad);
    const int ow = conv_out_size(static_cast<int>(ww), static_cast<int>(kw), stride, pad);
    const int64_t k = cin * kh * kw, p = static_cast<int64_t>(oh) * ow;
    TensorT<S> out({n, cout, oh, ow});
    std::vector<S> col(k * p);
    for (int64_t i = 0; i < n; ++i) {
        im2col(x->value.ptr() + i * cin * h * ww, static_cast<int>(cin), static_cast<int>(h),
               static_cast<int>(ww), static_cast<int>(kh), static_cast<int>(kw), stride, pad,
               col.data());
        gemm(false, false, static_cast<int>(cout), static_cast<int>(p), static_cast<int>(k), S(1),
             w->value.ptr(), static_cast<int>(k), col.data(), static_cast<int>(p), S(0),
             out.ptr() + i * cout * p, static_cast<int>(p));
    }
    const int ih = static_cast<int>(h), iw = static_cast<int>(ww);
    const int kkh = static_cast<int>(kh), kkw = static_cast<int>(kw);
    return detail::make_op<S>(
        std::move(out), {x, w},
        [stride, pad, ih, iw, kkh, kkw](const Var<S>& self, const Var<S>& g) -> std::vector<Var<S>> {
            const auto& x = self->parents[0];
            const auto& w = self->parents[1];
            return {conv2d_input_grad(w, g, stride, pad, ih, iw),
                    conv2d_weight_grad(x, g, stride, pad, kkh, kkw)};
        });
}

// adjoint of conv2d in x: maps gy [N,Cout,OH,OW] back to [N,Cin,H,W]
template <typename S>
Var<S> conv2d_input_grad(const Var<S>& w, const Var<S>& gy, int stride, int pad, int in_h,
                         int in_w) {
    const int64_t n = gy->value.dim(0), cout = gy->value.dim(1);
    const int64_t cin = w->value.dim(1), kh = w->value.dim(2), kw = w->value.dim(3);
    if (w->value.dim(0) != cout) throw ConfigError("conv2d_input_grad: channel mismatch");
    const int64_t k = cin * kh * kw, p = gy->value.dim(2) * gy->value.dim(3);
    TensorT<S> out({n, cin, in_h, in_w});
    std::vector<S> col(k * p);
    for (int64_t i = 0; i < n; ++i) {
        gemm(true, false, static_cast<int>(k), static_cast<int>(p), static_cast<int>(cout), S(1),
             w->value.ptr(), static_cast<int>(k), gy->value.ptr() + i * cout * p,
             static_cast<int>(p), S(0), col.data(), static_cast<int>(p));
        col2im(col.data(), static_cast<int>(cin), in_h, in_w, static_cast<int>(kh),
               static_cast<int>(kw), stride, pad, out.ptr() + i * cin * in_h * in_w);
    }
    const int kkh = static_cast<int>(kh), kkw = static_cast<int>(kw);
    return detail::make_op<S>(
        std::move(out), {w, gy},
        [stride, pad, kkh, kkw](const Var<S>& self, const Var<S>& u) -> std::vector<Var<S>> {
            const auto& w = self->parents[0];
            const auto& gy = self->parents[1];
            return {conv2d_weight_grad(u, gy, stride, pad, kkh, kkw), conv2d(u, w, stride, pad)};
        });
}

// adjoint of conv2d in w: maps gy to [Cout,Cin,kh,kw]
template <typename S>
Var<S> conv2d_weight_grad(const Var<S>& x, const Var<S>& gy, int stride, int pad, int kh, int kw) {
    const int64_t n = x->value.dim(0), cin = x->value.dim(1), h = x->value.dim(2),
                  w = x->value.dim(3);
    const int64_t cout = gy->value.dim(1), p = gy->value.dim(2) * gy->value.dim(3);
    if (gy->value.dim(0) != n) throw ConfigError("conv2d_weight_grad: batch mismatch");
    const int64_t k = cin * kh * kw;
    TensorT<S> out({cout, cin, kh, kw});
    std::vector<S> col(k * p);
    for (int64_t i = 0; i < n; ++i) {
        im2col(x->value.ptr() + i * cin * h * w, static_cast<int>(cin), static_cast<int>(h),
               static_cast<int>(w), kh, kw, stride, pad, col.data());
        gemm(false, true, static_cast<int>(cout), static_cast<int>(k), static_cast<int>(p), S(1),
             gy->value.ptr() + i * cout * p, static_cast<int>(p), col.data(), static_cast<int>(p),
             S(1), out.ptr(), static_cast<int>(k));
    }
    const int ih = static_cast<int>(h), iw = static_cast<int>(w);
    return detail::make_op<S>(
        std::move(out), {x, gy},
        [stride, pad, ih, iw](const Var<S>& self, const Var<S>& u) -> std::vector<Var<S>> {
            const auto& x = self->parents[0];
            const auto& gy = self->parents[1];
            return {conv2d_input_grad(u, gy, stride, pad, ih, iw), conv2d(x, u, stride, pad)};
        });
}

// ---- channel bias / modulation ----

template <typename S>
Var<S> sum_except_dim1(const Var<S>& x);

template <typename S>
Var<S> bias_add(const Var<S>& x, const Var<S>& b) {
    if (b->value.rank() != 1 || x->value.rank() < 2 || x->value.dim(1) != b->value.dim(0))
        throw ConfigError("bias_add: bias must match channel dim");
    const int64_t n = x->value.dim(0), c = x->value.dim(1);
    const int64_t inner = x->value.numel() / (n * c);
    TensorT<S> out(x->value.shape);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < c; ++j) {
            const S bv = b->value.data[j];
            const S* src = x->value.ptr() + (i * c + j) * inner;
            S* dst = out.ptr() + (i * c + j) * inner;
            for (int64_t t = 0; t < inner; ++t) dst[t] = src[t] + bv;
        }
    return detail::make_op<S>(std::move(out), {x, b},
                              [](const Var<S>&, const Var<S>& g) -> std::vector<Var<S>> {
                                  return {g, sum_except_dim1(g)};
                              });
}

template <typename S>
Var<S> broadcast_dim1(const Var<S>& b, const std::vector<int64_t>& shape);

template <typename S>
Var<S> sum_except_dim1(const Var<S>& x) {
    const int64_t n = x->value.dim(0), c = x->value.dim(1);
    const int64_t inner = x->value.numel() / (n * c);
    TensorT<S> out({c});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < c; ++j) {
            const S* src = x->value.ptr() + (i * c + j) * inner;
            S acc = 0;
            for (int64_t t = 0; t < inner; ++t) acc += src[t];
            out.data[j] += acc;
        }
    auto shape = x->value.shape;
    return detail::make_op<S>(std::move(out), {x},
                              [shape](const Var<S>&, const Var<S>& g) -> std::vector<Var<S>> {
                                  return {broadcast_dim1(g, shape)};
                              });
}

template <typename S>
Var<S> broadcast_dim1(const Var<S>& b, const std::vector<int64_t>& shape) {
    const int64_t n = shape[0], c = shape[1];
    int64_t inner = 1;
    for (size_t i = 2; i < shape.size(); ++i) inner *= shape[i];
    TensorT<S> out(shape);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < c; ++j) {
            S* dst = out.ptr() + (i * c + j) * inner;
            const S bv = b->value.data[j];
            for (int64_t t = 0; t < inner; ++t) dst[t] = bv;
        }
    return detail::make_op<S>(std::move(out), {b},
                              [](const Var<S>&, const Var<S>& g) -> std::vector<Var<S>> {
                                  return {sum_except_dim1(g)};
                              });
}

// y[n,c,:,:] = x[n,c,:,:] * s[n,c]
template <typename S>
Var<S> scale_channels(const Var<S>& x, const Var<S>& s) {
    if (x->value.rank() != 4 || s->value.rank() != 2 || x->value.dim(0) != s->value.dim(0) ||
        x->value.dim(1) != s->value.dim(1))
        throw ConfigError("scale_channels: shape mismatch");
    const int64_t nc = x->value.dim(0) * x->value.dim(1);
    const int64_t hw = x->value.dim(2) * x->value.dim(3);
    TensorT<S> out(x->value.shape);
    for (int64_t i = 0; i < nc; ++i) {
        const S sv = s->value.data[i];
        const S* src = x->value.ptr() + i * hw;
        S* dst = out.ptr() + i * hw;
        for (int64_t j = 0; j < hw; ++j) dst[j] = src[j] * sv;
    }
    return detail::make_op<S>(std::move(out), {x, s},
                              [](const Var<S>& self, const Var<S>& g) -> std::vector<Var<S>> {
                                  const auto& x = self->parents[0];
                                  const auto& s = self->parents[1];
                                  return {scale_channels(g, s), spatial_sum(mul(g, x))};
                              });
}

// ---- resampling ----

template <typename S>
Var<S> sumpool2x(const Var<S>& x);

template <typename S>
Var<S> upsample2x(const Var<S>& x) {
    const int64_t n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
    TensorT<S> out({n, c, h * 2, w * 2});
    for (int64_t i = 0; i < n * c; ++i) {
        const S* src = x->value.ptr() + i * h * w;
        S* dst = out.ptr() + i * 4 * h * w;
        for (int64_t y = 0; y < h; ++y)
            for (int64_t xx = 0; xx < w; ++xx) {
                const S v = src[y * w + xx];
                dst[(2 * y) * 2 * w + 2 * xx] = v;
                dst[(2 * y) * 2 * w + 2 * xx + 1] = v;
                dst[(2 * y + 1) * 2 * w + 2 * xx] = v;
                dst[(2 * y + 1) * 2 * w + 2 * xx + 1] = v;
            }
    }
    return detail::make_op<S>(std::move(out), {x},
                              [](const Var<S>&, const Var<S>& g) -> std::vector<Var<S>> {
                                  return {sumpool2x(g)};
                              });
}

template <typename S>
Var<S> sumpool2x(const Var<S>& x) {
    const int64_t n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
    if (h % 2 != 0 || w % 2 != 0) throw ConfigError("sumpool2x: odd spatial size");
    TensorT<S> out({n, c, h / 2, w / 2});
    for (int64_t i = 0; i < n * c; ++i) {
        const S* src = x->value.ptr() + i * h * w;
        S* dst = out.ptr() + i * (h / 2) * (w / 2);
        for (int64_t y = 0; y < h / 2; ++y)
            for (int64_t xx = 0; xx < w / 2; ++xx)
                dst[y * (w / 2) + xx] = src[(2 * y) * w + 2 * xx] + src[(2 * y) * w + 2 * xx + 1] +
                                        src[(2 * y + 1) * w + 2 * xx] +
                                        src[(2 * y + 1) * w + 2 * xx + 1];
    }
    return detail::make_op<S>(std::move(out), {x},
                              [](const Var<S>&, const Var<S>& g) -> std::vector<Var<S>> {
                                  return {upsample2x(g)};
                              });
}

// ---- softmax ----

// row-wise softmax on [M,N]
template <typename S>
Var<S> softmax_rows(const Var<S>& x) {
    if (x->value.rank() != 2) throw ConfigError("softmax_rows: rank-2 input required");
    const int64_t m = x->value.dim(0), n = x->value.dim(1);
    TensorT<S> out({m, n});
    for (int64_t i = 0; i < m; ++i) {
        const S* src = x->value.ptr() + i * n;
        S* dst = out.ptr() + i * n;
        S mx = src[0];
        for (int64_t j = 1; j < n; ++j) mx = std::max(mx, src[j]);
        S sum = 0;
        for (int64_t j = 0; j < n; ++j) {
            dst[j] = std::exp(src[j] - mx);
            sum += dst[j];
        }
        const S inv = S(1) / sum;
        for (int64_t j = 0; j < n; ++j) dst[j] *= inv;
    }
    return detail::make_op<S>(std::move(out), {x},
                              [](const Var<S>& self, const Var<S>& g) -> std::vector<Var<S>> {
                                  auto gy_y = mul(g, self);
                                  auto row = sum_rows(gy_y);
                                  auto b = broadcast_cols(row, self->value.dim(1));
                                  return {mul(self, sub(g, b))};
                              });
}

// ---- gradient driver ----

template <typename S>
std::unordered_map<Node<S>*, Var<S>> grad_map(const Var<S>& root, bool create_graph) {
    std::unordered_map<Node<S>*, Var<S>> grads;
    if (!root->requires_grad && !root->vjp) {
        return grads;
    }
    // iterative topo sort over grad-requiring subgraph
    std::vector<Var<S>> order;
    std::unordered_set<Node<S>*> seen;
    std::vector<std::pair<Var<S>, size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            auto& p = node->parents[idx++];
            if (p && p->requires_grad && !seen.count(p.get())) {
                seen.insert(p.get());
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    GradGuard guard(create_graph);
    grads[root.get()] = constant(TensorT<S>::full(root->value.shape, S(1)));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        auto& node = *it;
        auto found = grads.find(node.get());
        if (found == grads.end() || !node->vjp) continue;
        auto pgrads = node->vjp(node, found->second);
        for (size_t i = 0; i < node->parents.size(); ++i) {
            const auto& p = node->parents[i];
            if (!p || !p->requires_grad || i >= pgrads.size() || !pgrads[i]) continue;
            auto g = grads.find(p.get());
            if (g == grads.end())
                grads[p.get()] = pgrads[i];
            else
                g->second = add(g->second, pgrads[i]);
        }
    }
    return grads;
}

// Gradients of a scalar (or elementwise-seeded) root wrt `wrt`. Missing
// gradients come back as zero tensors.
template <typename S>
std::vector<Var<S>> grad(const Var<S>& root, const std::vector<Var<S>>& wrt,
                         bool create_graph = false) {
    auto grads = grad_map(root, create_graph);
    std::vector<Var<S>> out;
    out.reserve(wrt.size());
    for (const auto& v : wrt) {
        auto it = grads.find(v.get());
        if (it == grads.end())
            out.push_back(constant(TensorT<S>::zeros(v->value.shape)));
        else
            out.push_back(it->second);
    }
    return out;
}

template <typename S>
bool all_finite(const TensorT<S>& t) {
    for (S v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace jcut::ad
