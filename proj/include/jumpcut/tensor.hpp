#pragma once

#include <cblas.h>

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "jumpcut/common.hpp"

namespace jcut {

// Dense row-major tensor. Neural tensors use [N,C,H,W]; matrices [M,K].
template <typename S>
struct TensorT {
    std::vector<int64_t> shape;
    std::vector<S> data;

    TensorT() = default;
    explicit TensorT(std::vector<int64_t> sh) : shape(std::move(sh)), data(numel_of(shape), S(0)) {}
    TensorT(std::vector<int64_t> sh, std::vector<S> d) : shape(std::move(sh)), data(std::move(d)) {
        if (static_cast<int64_t>(data.size()) != numel_of(shape))
            throw ConfigError("tensor data size does not match shape");
    }

    static int64_t numel_of(const std::vector<int64_t>& sh) {
        int64_t n = 1;
        for (int64_t d : sh) n *= d;
        return n;
    }
    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int64_t dim(size_t i) const { return shape.at(i); }
    int rank() const { return static_cast<int>(shape.size()); }

    static TensorT zeros(std::vector<int64_t> sh) { return TensorT(std::move(sh)); }
    static TensorT full(std::vector<int64_t> sh, S v) {
        TensorT t(std::move(sh));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }
    static TensorT scalar(S v) { return TensorT({1}, {v}); }

    S* ptr() { return data.data(); }
    const S* ptr() const { return data.data(); }
};

using TensorF = TensorT<float>;
using TensorD = TensorT<double>;

inline void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda,
                 const float* b, int ldb, float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n,
                k, alpha, a, lda, b, ldb, beta, c, ldc);
}
inline void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda,
                 const double* b, int ldb, double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n,
                k, alpha, a, lda, b, ldb, beta, c, ldc);
}

inline int conv_out_size(int in, int kernel, int stride, int pad) {
    return (in + 2 * pad - kernel) / stride + 1;
}

// x [C,H,W] -> col [C*kh*kw, outH*outW]
template <typename S>
void im2col(const S* x, int c, int h, int w, int kh, int kw, int stride, int pad, S* col) {
    const int oh = conv_out_size(h, kh, stride, pad);
    const int ow = conv_out_size(w, kw, stride, pad);
    for (int ch = 0; ch < c; ++ch) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                S* dst = col + ((static_cast<int64_t>(ch) * kh + ky) * kw + kx) * oh * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) {
                        for (int ox = 0; ox < ow; ++ox) dst[oy * ow + ox] = S(0);
                        continue;
                    }
                    const S* src = x + (static_cast<int64_t>(ch) * h + iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        dst[oy * ow + ox] = (ix >= 0 && ix < w) ? src[ix] : S(0);
                    }
                }
            }
        }
    }
}

// col [C*kh*kw, outH*outW] scatter-added into x [C,H,W]
template <typename S>
void col2im(const S* col, int c, int h, int w, int kh, int kw, int stride, int pad, S* x) {
    const int oh = conv_out_size(h, kh, stride, pad);
    const int ow = conv_out_size(w, kw, stride, pad);
    for (int ch = 0; ch < c; ++ch) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                const S* src = col + ((static_cast<int64_t>(ch) * kh + ky) * kw + kx) * oh * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    S* dst = x + (static_cast<int64_t>(ch) * h + iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) dst[ix] += src[oy * ow + ox];
                    }
                }
            }
        }
    }
}

}  // namespace jcut
