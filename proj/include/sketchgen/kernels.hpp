#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sketchgen/parallel.hpp"
#include "sketchgen/tensor.hpp"

// Data-parallel compute kernels. Every OpenMP loop partitions disjoint output
// elements and keeps a fixed per-element accumulation order, so results do not
// depend on the thread count. kernels::reference holds naive serial versions
// of the heavy kernels, kept as the test oracle for the fast paths.
namespace sketchgen::kernels {

struct ConvGeom {
    int64_t n = 0, ci = 0, hi = 0, wi = 0; // input NCHW
    int64_t co = 0, kh = 0, kw = 0;        // filters
    int64_t stride = 1, pad = 0;
    int64_t ho = 0, wo = 0; // output spatial

    static ConvGeom make(int64_t n, int64_t ci, int64_t hi, int64_t wi, int64_t co, int64_t kh,
                         int64_t kw, int64_t stride, int64_t pad) {
        ConvGeom g{n, ci, hi, wi, co, kh, kw, stride, pad, 0, 0};
        g.ho = (hi + 2 * pad - kh) / stride + 1;
        g.wo = (wi + 2 * pad - kw) / stride + 1;
        return g;
    }
    int64_t patch() const { return ci * kh * kw; }
    int64_t positions() const { return ho * wo; }
};

// ---------------------------------------------------------------------------
// GEMM, row-major. C(MxN) += A(MxK) * B(KxN). Serial core shared by the
// parallel wrapper so both orders of accumulation are identical.
// ---------------------------------------------------------------------------

template <typename T>
inline void gemm_rows_serial(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const T* ai = a + i * k;
        T* ci = c + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const T av = ai[p];
            const T* bp = b + p * n;
#pragma omp simd
            for (int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

template <typename T>
inline void gemm_accumulate(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
    if (parallel_enabled() && m > 1) {
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < m; ++i) gemm_rows_serial(a + i * k, b, c + i * n, 1, k, n);
    } else {
        gemm_rows_serial(a, b, c, m, k, n);
    }
}

// ---------------------------------------------------------------------------
// im2col / col2im. Column layout: col[(ci*kh + r)*kw + s][y*wo + x].
// ---------------------------------------------------------------------------

template <typename T>
inline void im2col(const T* img, const ConvGeom& g, T* col) {
    const int64_t pos = g.positions();
    for (int64_t c = 0; c < g.ci; ++c) {
        const T* src = img + c * g.hi * g.wi;
        for (int64_t r = 0; r < g.kh; ++r) {
            for (int64_t s = 0; s < g.kw; ++s) {
                T* dst = col + ((c * g.kh + r) * g.kw + s) * pos;
                for (int64_t y = 0; y < g.ho; ++y) {
                    const int64_t iy = y * g.stride + r - g.pad;
                    if (iy < 0 || iy >= g.hi) {
                        for (int64_t x = 0; x < g.wo; ++x) dst[y * g.wo + x] = T(0);
                        continue;
                    }
                    for (int64_t x = 0; x < g.wo; ++x) {
                        const int64_t ix = x * g.stride + s - g.pad;
                        dst[y * g.wo + x] = (ix >= 0 && ix < g.wi) ? src[iy * g.wi + ix] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
inline void col2im_accumulate(const T* col, const ConvGeom& g, T* img) {
    const int64_t pos = g.positions();
    for (int64_t c = 0; c < g.ci; ++c) {
        T* dst = img + c * g.hi * g.wi;
        for (int64_t r = 0; r < g.kh; ++r) {
            for (int64_t s = 0; s < g.kw; ++s) {
                const T* src = col + ((c * g.kh + r) * g.kw + s) * pos;
                for (int64_t y = 0; y < g.ho; ++y) {
                    const int64_t iy = y * g.stride + r - g.pad;
                    if (iy < 0 || iy >= g.hi) continue;
                    for (int64_t x = 0; x < g.wo; ++x) {
                        const int64_t ix = x * g.stride + s - g.pad;
                        if (ix >= 0 && ix < g.wi) dst[iy * g.wi + ix] += src[y * g.wo + x];
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// conv2d: weights [co, ci, kh, kw], bias [co] (optional).
// ---------------------------------------------------------------------------

template <typename T>
inline void conv2d_forward(const T* x, const T* w, const T* bias, const ConvGeom& g, T* y,
                           std::vector<T>* col_cache = nullptr) {
    const int64_t pos = g.positions();
    const int64_t k = g.patch();
    if (col_cache) col_cache->assign(static_cast<size_t>(g.n * k * pos), T(0));

    const bool par = parallel_enabled() && g.n > 1;
#pragma omp parallel if (par)
    {
        std::vector<T> col(static_cast<size_t>(k * pos));
#pragma omp for schedule(static)
        for (int64_t nn = 0; nn < g.n; ++nn) {
            T* colp = col_cache ? col_cache->data() + nn * k * pos : col.data();
            im2col(x + nn * g.ci * g.hi * g.wi, g, colp);
            T* yn = y + nn * g.co * pos;
            for (int64_t c = 0; c < g.co; ++c) {
                const T bv = bias ? bias[c] : T(0);
                T* row = yn + c * pos;
                for (int64_t j = 0; j < pos; ++j) row[j] = bv;
            }
            gemm_rows_serial(w, colp, yn, g.co, k, pos);
        }
    }
}

template <typename T>
inline void conv2d_backward_input(const T* dy, const T* w, const ConvGeom& g, T* dx_accum) {
    const int64_t pos = g.positions();
    const int64_t k = g.patch();
    const bool par = parallel_enabled() && g.n > 1;
#pragma omp parallel if (par)
    {
        std::vector<T> dcol(static_cast<size_t>(k * pos));
#pragma omp for schedule(static)
        for (int64_t nn = 0; nn < g.n; ++nn) {
            std::fill(dcol.begin(), dcol.end(), T(0));
            const T* dyn = dy + nn * g.co * pos;
            // dcol = W^T * dy, accumulated over output channels in index order
            for (int64_t c = 0; c < g.co; ++c) {
                const T* wrow = w + c * k;
                const T* dyrow = dyn + c * pos;
                for (int64_t p = 0; p < k; ++p) {
                    const T wv = wrow[p];
                    T* drow = dcol.data() + p * pos;
#pragma omp simd
                    for (int64_t j = 0; j < pos; ++j) drow[j] += wv * dyrow[j];
                }
            }
            col2im_accumulate(dcol.data(), g, dx_accum + nn * g.ci * g.hi * g.wi);
        }
    }
}

// Accumulates dw [co,k] and db [co]. Requires the im2col cache written by
// conv2d_forward (one K x positions block per sample).
template <typename T>
inline void conv2d_backward_params(const T* dy, const T* col_cache, const ConvGeom& g, T* dw_accum,
                                   T* db_accum) {
    const int64_t pos = g.positions();
    const int64_t k = g.patch();
    const bool par = parallel_enabled() && g.co > 1;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t c = 0; c < g.co; ++c) {
        for (int64_t nn = 0; nn < g.n; ++nn) {
            const T* dyrow = dy + (nn * g.co + c) * pos;
            const T* col = col_cache + nn * k * pos;
            T* dwrow = dw_accum + c * k;
            for (int64_t p = 0; p < k; ++p) {
                const T* crow = col + p * pos;
                T acc = T(0);
#pragma omp simd reduction(+ : acc)
                for (int64_t j = 0; j < pos; ++j) acc += dyrow[j] * crow[j];
                dwrow[p] += acc;
            }
            if (db_accum) {
                T acc = T(0);
#pragma omp simd reduction(+ : acc)
                for (int64_t j = 0; j < pos; ++j) acc += dyrow[j];
                db_accum[c] += acc;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Batch normalization over (N, H, W) per channel.
// ---------------------------------------------------------------------------

template <typename T>
inline void bn_batch_stats(const T* x, int64_t n, int64_t c, int64_t hw, T* mean, T* var) {
    const T inv_m = T(1) / static_cast<T>(n * hw);
    const bool par = parallel_enabled() && c > 1;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t ch = 0; ch < c; ++ch) {
        T s = T(0);
        for (int64_t nn = 0; nn < n; ++nn) {
            const T* p = x + (nn * c + ch) * hw;
#pragma omp simd reduction(+ : s)
            for (int64_t j = 0; j < hw; ++j) s += p[j];
        }
        const T mu = s * inv_m;
        T v = T(0);
        for (int64_t nn = 0; nn < n; ++nn) {
            const T* p = x + (nn * c + ch) * hw;
#pragma omp simd reduction(+ : v)
            for (int64_t j = 0; j < hw; ++j) v += (p[j] - mu) * (p[j] - mu);
        }
        mean[ch] = mu;
        var[ch] = v * inv_m;
    }
}

// xhat = (x - mean[c]) / sqrt(var[c] + eps); y = gamma * xhat + beta.
// gamma/beta are per (n, c) when per_sample_affine, per channel otherwise.
template <typename T>
inline void bn_normalize_affine(const T* x, int64_t n, int64_t c, int64_t hw, const T* mean,
                                const T* var, T eps, const T* gamma, const T* beta,
                                bool per_sample_affine, T* xhat, T* y) {
    const bool par = parallel_enabled() && n * c > 1;
#pragma omp parallel for collapse(2) schedule(static) if (par)
    for (int64_t nn = 0; nn < n; ++nn) {
        for (int64_t ch = 0; ch < c; ++ch) {
            const T inv_sd = T(1) / std::sqrt(var[ch] + eps);
            const T mu = mean[ch];
            const int64_t a = per_sample_affine ? nn * c + ch : ch;
            const T gv = gamma[a], bv = beta[a];
            const T* px = x + (nn * c + ch) * hw;
            T* ph = xhat + (nn * c + ch) * hw;
            T* py = y + (nn * c + ch) * hw;
#pragma omp simd
            for (int64_t j = 0; j < hw; ++j) {
                const T h = (px[j] - mu) * inv_sd;
                ph[j] = h;
                py[j] = gv * h + bv;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Elementwise / shape kernels.
// ---------------------------------------------------------------------------

template <typename T, typename F>
inline void map_elements(const T* x, T* y, int64_t n, F f) {
    const bool par = parallel_enabled() && n > (1 << 14);
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < n; ++i) y[i] = f(x[i]);
}

template <typename T>
inline void upsample_nearest2x_forward(const T* x, int64_t n, int64_t c, int64_t h, int64_t w,
                                       T* y) {
    const bool par = parallel_enabled() && n * c > 1;
#pragma omp parallel for collapse(2) schedule(static) if (par)
    for (int64_t nn = 0; nn < n; ++nn) {
        for (int64_t ch = 0; ch < c; ++ch) {
            const T* src = x + (nn * c + ch) * h * w;
            T* dst = y + (nn * c + ch) * 4 * h * w;
            for (int64_t i = 0; i < h; ++i) {
                for (int64_t j = 0; j < w; ++j) {
                    const T v = src[i * w + j];
                    T* d = dst + (2 * i) * (2 * w) + 2 * j;
                    d[0] = v;
                    d[1] = v;
                    d[2 * w] = v;
                    d[2 * w + 1] = v;
                }
            }
        }
    }
}

template <typename T>
inline void upsample_nearest2x_backward(const T* dy, int64_t n, int64_t c, int64_t h, int64_t w,
                                        T* dx_accum) {
    const bool par = parallel_enabled() && n * c > 1;
#pragma omp parallel for collapse(2) schedule(static) if (par)
    for (int64_t nn = 0; nn < n; ++nn) {
        for (int64_t ch = 0; ch < c; ++ch) {
            const T* src = dy + (nn * c + ch) * 4 * h * w;
            T* dst = dx_accum + (nn * c + ch) * h * w;
            for (int64_t i = 0; i < h; ++i) {
                for (int64_t j = 0; j < w; ++j) {
                    const T* s = src + (2 * i) * (2 * w) + 2 * j;
                    dst[i * w + j] += s[0] + s[1] + s[2 * w] + s[2 * w + 1];
                }
            }
        }
    }
}

template <typename T>
inline void global_avg_pool_forward(const T* x, int64_t n, int64_t c, int64_t hw, T* y) {
    const T inv = T(1) / static_cast<T>(hw);
    const bool par = parallel_enabled() && n * c > 1;
#pragma omp parallel for collapse(2) schedule(static) if (par)
    for (int64_t nn = 0; nn < n; ++nn) {
        for (int64_t ch = 0; ch < c; ++ch) {
            const T* p = x + (nn * c + ch) * hw;
            T s = T(0);
#pragma omp simd reduction(+ : s)
            for (int64_t j = 0; j < hw; ++j) s += p[j];
            y[nn * c + ch] = s * inv;
        }
    }
}

// ---------------------------------------------------------------------------
// Naive serial reference implementations (test oracles for the fast paths).
// ---------------------------------------------------------------------------
namespace reference {

template <typename T>
inline void gemm_accumulate(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
            T acc = c[i * n + j];
            for (int64_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            c[i * n + j] = acc;
        }
}

template <typename T>
inline void conv2d_forward(const T* x, const T* w, const T* bias, const ConvGeom& g, T* y) {
    for (int64_t nn = 0; nn < g.n; ++nn)
        for (int64_t c = 0; c < g.co; ++c)
            for (int64_t oy = 0; oy < g.ho; ++oy)
                for (int64_t ox = 0; ox < g.wo; ++ox) {
                    T acc = bias ? bias[c] : T(0);
                    for (int64_t ci = 0; ci < g.ci; ++ci)
                        for (int64_t r = 0; r < g.kh; ++r)
                            for (int64_t s = 0; s < g.kw; ++s) {
                                const int64_t iy = oy * g.stride + r - g.pad;
                                const int64_t ix = ox * g.stride + s - g.pad;
                                if (iy < 0 || iy >= g.hi || ix < 0 || ix >= g.wi) continue;
                                acc += w[((c * g.ci + ci) * g.kh + r) * g.kw + s] *
                                       x[((nn * g.ci + ci) * g.hi + iy) * g.wi + ix];
                            }
                    y[((nn * g.co + c) * g.ho + oy) * g.wo + ox] = acc;
                }
}

template <typename T>
inline void conv2d_backward(const T* x, const T* w, const T* dy, const ConvGeom& g, T* dx, T* dw,
                            T* db) {
    for (int64_t nn = 0; nn < g.n; ++nn)
        for (int64_t c = 0; c < g.co; ++c)
            for (int64_t oy = 0; oy < g.ho; ++oy)
                for (int64_t ox = 0; ox < g.wo; ++ox) {
                    const T gout = dy[((nn * g.co + c) * g.ho + oy) * g.wo + ox];
                    if (db) db[c] += gout;
                    for (int64_t ci = 0; ci < g.ci; ++ci)
                        for (int64_t r = 0; r < g.kh; ++r)
                            for (int64_t s = 0; s < g.kw; ++s) {
                                const int64_t iy = oy * g.stride + r - g.pad;
                                const int64_t ix = ox * g.stride + s - g.pad;
                                if (iy < 0 || iy >= g.hi || ix < 0 || ix >= g.wi) continue;
                                const int64_t wi = ((c * g.ci + ci) * g.kh + r) * g.kw + s;
                                const int64_t xi = ((nn * g.ci + ci) * g.hi + iy) * g.wi + ix;
                                if (dx) dx[xi] += w[wi] * gout;
                                if (dw) dw[wi] += x[xi] * gout;
                            }
                }
}

template <typename T>
inline void bn_batch_stats(const T* x, int64_t n, int64_t c, int64_t hw, T* mean, T* var) {
    for (int64_t ch = 0; ch < c; ++ch) {
        T s = T(0);
        for (int64_t nn = 0; nn < n; ++nn)
            for (int64_t j = 0; j < hw; ++j) s += x[(nn * c + ch) * hw + j];
        const T mu = s / static_cast<T>(n * hw);
        T v = T(0);
        for (int64_t nn = 0; nn < n; ++nn)
            for (int64_t j = 0; j < hw; ++j) {
                const T d = x[(nn * c + ch) * hw + j] - mu;
                v += d * d;
            }
        mean[ch] = mu;
        var[ch] = v / static_cast<T>(n * hw);
    }
}

} // namespace reference

} // namespace sketchgen::kernels
