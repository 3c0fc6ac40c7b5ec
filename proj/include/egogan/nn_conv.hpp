#pragma once

#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "egogan/gemm.hpp"
#include "egogan/parallel.hpp"
#include "egogan/rng.hpp"
#include "egogan/tensor.hpp"

// Convolution layers. Three execution paths, chosen by shape:
//   - pointwise: 1x1x1 stride-1 convs run straight GEMMs on the feature map
//   - direct: large-kernel strided convs (the stem) skip im2col entirely
//   - im2col: everything else; small layers batch-parallel with serial GEMMs

namespace egogan::nn {

struct Dims3 {
    int t = 1, h = 1, w = 1;
};

struct FwdCtx {
    bool keep = false;
    bool batch_stats = true;
    bool update_running = false;

    static FwdCtx train() { return {true, true, true}; }
    static FwdCtx frozen() { return {true, true, false}; }   // caches, no buffer writes
    static FwdCtx no_grad() { return {false, true, false}; } // batch stats, nothing stored
    static FwdCtx eval() { return {false, false, false}; }
};

template <class T>
struct ParamRef {
    std::string name;
    Tensor<T>* value = nullptr;
    Tensor<T>* grad = nullptr;
};

template <class T>
struct BufferRef {
    std::string name;
    Tensor<T>* value = nullptr;
};

inline i64 conv_out_dim(i64 in, int k, int s, int p) {
    i64 out = (in + 2 * p - k) / s + 1;
    if (out < 1) throw ConfigError("conv output dimension would be < 1");
    return out;
}

inline i64 convt_out_dim(i64 in, int k, int s, int p, int op) {
    i64 out = (in - 1) * s - 2 * p + k + op;
    if (out < 1) throw ConfigError("transposed conv output dimension would be < 1");
    return out;
}

// ---------------------------------------------------------------------------
// im2col / col2im for a single sample [C, T, H, W]
// ---------------------------------------------------------------------------

template <class T>
void im2col3d(const T* x, i64 C, i64 Ti, i64 Hi, i64 Wi, Dims3 k, Dims3 s, Dims3 p, i64 To, i64 Ho, i64 Wo, T* cols,
              bool threaded) {
    const i64 rows = C * k.t * k.h * k.w;
    const i64 P = To * Ho * Wo;
    auto body = [&](i64 r_lo, i64 r_hi) {
        for (i64 r = r_lo; r < r_hi; ++r) {
            const i64 kw_ = r % k.w;
            const i64 kh_ = (r / k.w) % k.h;
            const i64 kt_ = (r / (k.w * k.h)) % k.t;
            const i64 c = r / (k.w * k.h * k.t);
            const T* xc = x + c * Ti * Hi * Wi;
            T* out = cols + r * P;
            for (i64 to = 0; to < To; ++to) {
                const i64 ti = to * s.t - p.t + kt_;
                const bool t_ok = ti >= 0 && ti < Ti;
                for (i64 ho = 0; ho < Ho; ++ho) {
                    const i64 hi = ho * s.h - p.h + kh_;
                    const bool h_ok = t_ok && hi >= 0 && hi < Hi;
                    T* o = out + (to * Ho + ho) * Wo;
                    if (!h_ok) {
                        std::memset(o, 0, sizeof(T) * static_cast<size_t>(Wo));
                        continue;
                    }
                    const T* src = xc + (ti * Hi + hi) * Wi;
                    const i64 w_base = -p.w + kw_;
                    for (i64 wo = 0; wo < Wo; ++wo) {
                        const i64 wi = wo * s.w + w_base;
                        o[wo] = (wi >= 0 && wi < Wi) ? src[wi] : T(0);
                    }
                }
            }
        }
    };
    if (threaded)
        parallel_for(rows, body);
    else
        body(0, rows);
}

// adjoint of im2col3d: x += scatter(cols)
template <class T>
void col2im3d(const T* cols, i64 C, i64 Ti, i64 Hi, i64 Wi, Dims3 k, Dims3 s, Dims3 p, i64 To, i64 Ho, i64 Wo, T* x,
              bool threaded) {
    const i64 P = To * Ho * Wo;
    const i64 kvol = i64(k.t) * k.h * k.w;
    auto body = [&](i64 c_lo, i64 c_hi) {
        for (i64 c = c_lo; c < c_hi; ++c) {
            T* xc = x + c * Ti * Hi * Wi;
            for (i64 kk = 0; kk < kvol; ++kk) {
                const i64 kw_ = kk % k.w;
                const i64 kh_ = (kk / k.w) % k.h;
                const i64 kt_ = kk / (k.w * k.h);
                const T* in = cols + (c * kvol + kk) * P;
                for (i64 to = 0; to < To; ++to) {
                    const i64 ti = to * s.t - p.t + kt_;
                    if (ti < 0 || ti >= Ti) continue;
                    for (i64 ho = 0; ho < Ho; ++ho) {
                        const i64 hi = ho * s.h - p.h + kh_;
                        if (hi < 0 || hi >= Hi) continue;
                        T* dst = xc + (ti * Hi + hi) * Wi;
                        const T* src = in + (to * Ho + ho) * Wo;
                        const i64 w_base = -p.w + kw_;
                        for (i64 wo = 0; wo < Wo; ++wo) {
                            const i64 wi = wo * s.w + w_base;
                            if (wi >= 0 && wi < Wi) dst[wi] += src[wo];
                        }
                    }
                }
            }
        }
    };
    if (threaded)
        parallel_for(C, body);
    else
        body(0, C);
}

// ---------------------------------------------------------------------------
// Conv3d
// ---------------------------------------------------------------------------

template <class T>
struct Conv3d {
    i64 in_c = 0, out_c = 0;
    Dims3 k, stride, pad;
    bool has_bias = false;
    bool skip_input_grad = false; // set on the first layer of a network

    Tensor<T> w;  // [out_c, in_c * kvol]
    Tensor<T> b;  // [out_c]
    Tensor<T> gw, gb;

    Tensor<T> x_cache;
    raw_vector<T> cols_cache; // small-path forward columns, reused in backward

    Conv3d() = default;
    Conv3d(i64 in, i64 out, Dims3 kernel, Dims3 s = {1, 1, 1}, Dims3 p = {0, 0, 0}, bool bias = false)
        : in_c(in), out_c(out), k(kernel), stride(s), pad(p), has_bias(bias) {
        const i64 kvol = i64(k.t) * k.h * k.w;
        w = Tensor<T>({out_c, in_c * kvol});
        gw = Tensor<T>({out_c, in_c * kvol});
        if (has_bias) {
            b = Tensor<T>({out_c});
            gb = Tensor<T>({out_c});
        }
    }

    void init_he(Rng& rng) {
        const double std = std::sqrt(2.0 / static_cast<double>(w.size(1)));
        for (auto& v : w.data) v = static_cast<T>(rng.normal() * std);
        if (has_bias) b.zero();
    }

    bool pointwise() const {
        return k.t == 1 && k.h == 1 && k.w == 1 && stride.t == 1 && stride.h == 1 && stride.w == 1 && pad.t == 0 &&
               pad.h == 0 && pad.w == 0;
    }

    // kx1x1 convs are shifted pointwise products; no columns needed
    bool temporal_only() const {
        return k.h == 1 && k.w == 1 && k.t > 1 && stride.t == 1 && stride.h == 1 && stride.w == 1 && pad.h == 0 &&
               pad.w == 0;
    }

    // im2col inflates traffic by kvol / stride volume; go direct when that
    // blowup is severe and the plane is large (in practice: the stem)
    bool direct(i64 P) const {
        const i64 kvol = i64(k.t) * k.h * k.w;
        const i64 svol = i64(stride.t) * stride.h * stride.w;
        return kvol >= 8 * svol && kvol >= 45 && P >= 2048;
    }

    std::vector<i64> out_shape(const std::vector<i64>& in) const {
        return {in[0], out_c, conv_out_dim(in[2], k.t, stride.t, pad.t), conv_out_dim(in[3], k.h, stride.h, pad.h),
                conv_out_dim(in[4], k.w, stride.w, pad.w)};
    }

    Tensor<T> forward(const Tensor<T>& x, const FwdCtx& ctx) {
        if (x.size(1) != in_c)
            throw ConfigError("Conv3d: expected " + std::to_string(in_c) + " input channels, got " +
                              std::to_string(x.size(1)));
        auto os = out_shape(x.shape);
        Tensor<T> y = Tensor<T>::uninit(os);
        const i64 N = x.size(0);
        const i64 P = os[2] * os[3] * os[4];
        const i64 Pin = x.size(2) * x.size(3) * x.size(4);
        const i64 K = w.size(1);
        if (pointwise()) {
            for (i64 n = 0; n < N; ++n)
                gemm_nn<T>(out_c, P, K, w.ptr(), x.ptr() + n * in_c * P, y.ptr() + n * out_c * P);
        } else if (temporal_only()) {
            y.zero();
            forward_temporal(x, y, os);
        } else if (direct(P)) {
            forward_direct(x, y, os);
        } else if (K * P * N <= (i64(1) << 23)) {
            // small layer: samples in parallel, serial GEMM inside
            raw_vector<T> cols(static_cast<size_t>(K * P * N));
            parallel_for(N, [&](i64 n_lo, i64 n_hi) {
                for (i64 n = n_lo; n < n_hi; ++n) {
                    T* c = cols.data() + n * K * P;
                    im2col3d(x.ptr() + n * in_c * Pin, in_c, x.size(2), x.size(3), x.size(4), k, stride, pad, os[2],
                             os[3], os[4], c, false);
                    detail::gemm_nn_range<T>(out_c, P, K, w.ptr(), c, y.ptr() + n * out_c * P, false, 0, P);
                }
            });
        } else {
            raw_vector<T> cols(static_cast<size_t>(K * P));
            for (i64 n = 0; n < N; ++n) {
                im2col3d(x.ptr() + n * in_c * Pin, in_c, x.size(2), x.size(3), x.size(4), k, stride, pad, os[2],
                         os[3], os[4], cols.data(), true);
                gemm_nn<T>(out_c, P, K, w.ptr(), cols.data(), y.ptr() + n * out_c * P);
            }
        }
        if (has_bias) add_bias(y, P);
        if (ctx.keep) x_cache = x;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        const Tensor<T>& x = x_cache;
        if (x.numel() == 0) throw ConfigError("Conv3d: backward without cached forward");
        const i64 N = x.size(0);
        const i64 P = gy.size(2) * gy.size(3) * gy.size(4);
        const i64 Pin = x.size(2) * x.size(3) * x.size(4);
        const i64 K = w.size(1);
        Tensor<T> gx;
        if (!skip_input_grad) gx = pointwise() ? Tensor<T>::uninit(x.shape) : Tensor<T>(x.shape);
        if (pointwise()) {
            for (i64 n = 0; n < N; ++n) {
                const T* gyp = gy.ptr() + n * out_c * P;
                gemm_nt<T>(out_c, in_c, P, gyp, x.ptr() + n * in_c * P, gw.ptr(), true);
                if (!skip_input_grad) gemm_tn<T>(in_c, P, out_c, w.ptr(), gyp, gx.ptr() + n * in_c * P);
            }
        } else if (temporal_only()) {
            backward_temporal(x, gy, gx);
        } else if (direct(P) && skip_input_grad && k.w == 7) {
            backward_weight_direct(x, gy);
        } else if (K * P * N <= (i64(1) << 23)) {
            const bool have_cols = cols_cache.size() == static_cast<size_t>(K * P * N);
            raw_vector<T> cols;
            if (!have_cols) cols.resize(static_cast<size_t>(K * P * N));
            T* cols_p = have_cols ? cols_cache.data() : cols.data();
            std::vector<T> partial(static_cast<size_t>(N * gw.numel()), T(0));
            raw_vector<T> gcols;
            if (!skip_input_grad) gcols.resize(static_cast<size_t>(K * P * N));
            parallel_for(N, [&](i64 n_lo, i64 n_hi) {
                for (i64 n = n_lo; n < n_hi; ++n) {
                    T* c = cols_p + n * K * P;
                    const T* gyp = gy.ptr() + n * out_c * P;
                    if (!have_cols)
                        im2col3d(x.ptr() + n * in_c * Pin, in_c, x.size(2), x.size(3), x.size(4), k, stride, pad,
                                 gy.size(2), gy.size(3), gy.size(4), c, false);
                    gemm_nt_serial(out_c, K, P, gyp, c, partial.data() + n * gw.numel());
                    if (!skip_input_grad) {
                        T* gc = gcols.data() + n * K * P;
                        gemm_tn_serial(K, P, out_c, w.ptr(), gyp, gc);
                        col2im3d(gc, in_c, x.size(2), x.size(3), x.size(4), k, stride, pad, gy.size(2), gy.size(3),
                                 gy.size(4), gx.ptr() + n * in_c * Pin, false);
                    }
                }
            });
            // deterministic reduction over samples in index order
            T* __restrict gwp = gw.ptr();
            const i64 wn = gw.numel();
            for (i64 n = 0; n < N; ++n) {
                const T* __restrict pp = partial.data() + n * wn;
#pragma omp simd
                for (i64 i = 0; i < wn; ++i) gwp[i] += pp[i];
            }
        } else {
            raw_vector<T> cols(static_cast<size_t>(K * P));
            raw_vector<T> gcols;
            if (!skip_input_grad) gcols.resize(static_cast<size_t>(K * P));
            for (i64 n = 0; n < N; ++n) {
                const T* gyp = gy.ptr() + n * out_c * P;
                im2col3d(x.ptr() + n * in_c * Pin, in_c, x.size(2), x.size(3), x.size(4), k, stride, pad, gy.size(2),
                         gy.size(3), gy.size(4), cols.data(), true);
                gemm_nt<T>(out_c, K, P, gyp, cols.data(), gw.ptr(), true);
                if (skip_input_grad) continue;
                gemm_tn<T>(K, P, out_c, w.ptr(), gyp, gcols.data());
                col2im3d(gcols.data(), in_c, x.size(2), x.size(3), x.size(4), k, stride, pad, gy.size(2), gy.size(3),
                         gy.size(4), gx.ptr() + n * in_c * Pin, true);
            }
        }
        if (has_bias) grad_bias(gy, P);
        return gx;
    }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        out.push_back({prefix + ".weight", &w, &gw});
        if (has_bias) out.push_back({prefix + ".bias", &b, &gb});
    }

  private:
    static void gemm_nt_serial(i64 M, i64 Nn, i64 Kk, const T* A, const T* B, T* C) {
        for (i64 m = 0; m < M; ++m) {
            const T* a = A + m * Kk;
            T* c = C + m * Nn;
            for (i64 n = 0; n < Nn; ++n) {
                const T* bb = B + n * Kk;
                T acc = 0;
#pragma omp simd reduction(+ : acc)
                for (i64 kk2 = 0; kk2 < Kk; ++kk2) acc += a[kk2] * bb[kk2];
                c[n] += acc;
            }
        }
    }

    static void gemm_tn_serial(i64 M, i64 Nn, i64 Kk, const T* A, const T* B, T* C) {
        for (i64 m = 0; m < M; ++m) std::memset(C + m * Nn, 0, sizeof(T) * static_cast<size_t>(Nn));
        for (i64 kk2 = 0; kk2 < Kk; ++kk2) {
            const T* arow = A + kk2 * M;
            const T* bb = B + kk2 * Nn;
            for (i64 m = 0; m < M; ++m) {
                const T v = arow[m];
                T* c = C + m * Nn;
#pragma omp simd
                for (i64 n = 0; n < Nn; ++n) c[n] += v * bb[n];
            }
        }
    }

    void add_bias(Tensor<T>& y, i64 P) {
        const i64 NC = y.size(0) * out_c;
        parallel_for(NC, [&](i64 lo, i64 hi) {
            for (i64 i = lo; i < hi; ++i) {
                T* yp = y.ptr() + i * P;
                const T bv = b[i % out_c];
                for (i64 j = 0; j < P; ++j) yp[j] += bv;
            }
        });
    }

    void grad_bias(const Tensor<T>& gy, i64 P) {
        const i64 N = gy.size(0);
        for (i64 n = 0; n < N; ++n)
            parallel_for(out_c, [&](i64 lo, i64 hi) {
                for (i64 c = lo; c < hi; ++c) {
                    const T* __restrict gyp = gy.ptr() + (n * out_c + c) * P;
                    T acc = 0;
#pragma omp simd reduction(+ : acc)
                    for (i64 j = 0; j < P; ++j) acc += gyp[j];
                    gb[c] += acc;
                }
            });
    }

    // kx1x1 temporal convs as shifted channel-mixing GEMMs on t-slabs
    struct TemporalTaps {
        raw_vector<T> a;  // [kt][out_c][in_c]
        raw_vector<T> at; // [kt][in_c][out_c]
    };

    TemporalTaps temporal_taps() const {
        TemporalTaps taps;
        taps.a.resize(static_cast<size_t>(k.t * out_c * in_c));
        taps.at.resize(static_cast<size_t>(k.t * out_c * in_c));
        for (int j = 0; j < k.t; ++j)
            for (i64 co = 0; co < out_c; ++co)
                for (i64 c = 0; c < in_c; ++c) {
                    const T v = w[co * w.size(1) + c * k.t + j];
                    taps.a[static_cast<size_t>((j * out_c + co) * in_c + c)] = v;
                    taps.at[static_cast<size_t>((j * in_c + c) * out_c + co)] = v;
                }
        return taps;
    }

    // valid output slab [t0, t1) for tap j
    bool tap_slab(int j, i64 Ti, i64 To, i64& t0, i64& t1) const {
        const i64 shift = j - pad.t;
        t0 = std::max<i64>(0, -shift);
        t1 = std::min<i64>(To, Ti - shift);
        return t1 > t0;
    }

    void forward_temporal(const Tensor<T>& x, Tensor<T>& y, const std::vector<i64>& os) {
        const i64 N = x.size(0), Ti = x.size(2), To = os[2];
        const i64 HW = x.size(3) * x.size(4);
        const TemporalTaps taps = temporal_taps();
        parallel_for(N, [&](i64 n_lo, i64 n_hi) {
            for (i64 n = n_lo; n < n_hi; ++n)
                for (int j = 0; j < k.t; ++j) {
                    i64 t0, t1;
                    if (!tap_slab(j, Ti, To, t0, t1)) continue;
                    const T* B = x.ptr() + (n * in_c * Ti + t0 + j - pad.t) * HW;
                    T* C = y.ptr() + (n * out_c * To + t0) * HW;
                    detail::gemm_nn_strided_acc<T>(out_c, (t1 - t0) * HW, in_c,
                                                   taps.a.data() + j * out_c * in_c, B, Ti * HW, C, To * HW);
                }
        });
    }

    void backward_temporal(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>& gx) {
        const i64 N = x.size(0), Ti = x.size(2), To = gy.size(2);
        const i64 HW = x.size(3) * x.size(4);
        const TemporalTaps taps = temporal_taps();
        const i64 wsz = gw.numel();
        std::vector<T> partial(static_cast<size_t>(N * k.t * out_c * in_c), T(0));
        parallel_for(N, [&](i64 n_lo, i64 n_hi) {
            for (i64 n = n_lo; n < n_hi; ++n)
                for (int j = 0; j < k.t; ++j) {
                    i64 t0, t1;
                    if (!tap_slab(j, Ti, To, t0, t1)) continue;
                    const T* gyp = gy.ptr() + (n * out_c * To + t0) * HW;
                    const T* xp = x.ptr() + (n * in_c * Ti + t0 + j - pad.t) * HW;
                    detail::gemm_nt_strided_acc<T>(out_c, in_c, (t1 - t0) * HW, gyp, To * HW, xp, Ti * HW,
                                                   partial.data() + (n * k.t + j) * out_c * in_c);
                    if (!skip_input_grad) {
                        T* gxp = gx.ptr() + (n * in_c * Ti + t0 + j - pad.t) * HW;
                        detail::gemm_nn_strided_acc<T>(in_c, (t1 - t0) * HW, out_c,
                                                       taps.at.data() + j * in_c * out_c, gyp, To * HW, gxp,
                                                       Ti * HW);
                    }
                }
        });
        (void)wsz;
        for (i64 n = 0; n < N; ++n)
            for (int j = 0; j < k.t; ++j) {
                const T* pp = partial.data() + (n * k.t + j) * out_c * in_c;
                for (i64 co = 0; co < out_c; ++co)
                    for (i64 c = 0; c < in_c; ++c) gw[co * w.size(1) + c * k.t + j] += pp[co * in_c + c];
            }
    }

    // Deinterleave columns by the spatial stride so every inner loop reads
    // contiguously: lane r holds x[s*j + r]. Rows carry zeroed guard cells on
    // both sides so shifted reads never need edge handling (out-of-image
    // pixels contribute zero, exactly like conv padding).
    struct Lanes {
        i64 lane_w = 0;  // payload lane width
        i64 row_w = 0;   // padded row width
        i64 pad_l = 0;
        i64 sw = 1;
        raw_vector<T> buf; // [C, Ti, Hi, sw, row_w]

        void build(const T* xn, i64 C, i64 Ti, i64 Hi, i64 Wi, int sw_, i64 pad_left, i64 pad_right, bool threaded) {
            sw = sw_;
            lane_w = (Wi + sw - 1) / sw;
            pad_l = pad_left;
            row_w = pad_left + lane_w + pad_right;
            buf.resize(static_cast<size_t>(C * Ti * Hi * sw * row_w));
            const i64 rows = C * Ti * Hi;
            auto body = [&](i64 lo, i64 hi) {
                for (i64 r = lo; r < hi; ++r) {
                    const T* src = xn + r * Wi;
                    for (i64 par = 0; par < sw; ++par) {
                        T* dst = buf.data() + (r * sw + par) * row_w;
                        std::memset(dst, 0, sizeof(T) * static_cast<size_t>(row_w));
                        dst += pad_l;
                        i64 j = 0;
                        for (i64 wi = par; wi < Wi; wi += sw, ++j) dst[j] = src[wi];
                    }
                }
            };
            if (threaded)
                parallel_for(rows, body);
            else
                body(0, rows);
        }

        // pointer to logical lane element 0 of parity 0; add par*row_w+shift
        const T* row0(i64 c, i64 ti, i64 hi, i64 Ti, i64 Hi) const {
            return buf.data() + ((c * Ti + ti) * Hi + hi) * sw * row_w + pad_l;
        }
    };

    // per kernel column: lane parity, lane shift, valid output range
    struct ColPlan {
        i64 par, shift, lo, hi;
    };

    std::vector<ColPlan> column_plan(i64 Wi, i64 Wo) const {
        std::vector<ColPlan> plan(static_cast<size_t>(k.w));
        for (int kw_ = 0; kw_ < k.w; ++kw_) {
            const i64 off = kw_ - pad.w;
            i64 q = off >= 0 ? off / stride.w : -((-off + stride.w - 1) / stride.w);
            i64 r = off - q * stride.w;
            i64 lo = 0;
            while (lo < Wo && lo * stride.w + off < 0) ++lo;
            i64 hi = Wo;
            while (hi > lo && (hi - 1) * stride.w + off >= Wi) --hi;
            plan[kw_] = {r, q, lo, hi};
        }
        return plan;
    }

    // all kernel columns applied in one full-width pass (guard cells make
    // every shifted read valid); the hot path is the 7-wide stem kernel
    template <int KW>
    static void fused_row_fwd(T* __restrict acc, const T* wk, const T* base, const i64* off, i64 n) {
#pragma omp simd
        for (i64 wo = 0; wo < n; ++wo) {
            T s = acc[wo];
            for (int j = 0; j < KW; ++j) s += wk[j] * base[off[j] + wo];
            acc[wo] = s;
        }
    }

    void direct_sample_forward(T* yn, const Lanes& lanes, const std::vector<i64>& off, i64 Ti, i64 Hi, i64 To,
                               i64 Ho, i64 Wo, i64 co_lo, i64 co_hi, T* acc) const {
        for (i64 co = co_lo; co < co_hi; ++co) {
            const T* wrow = w.ptr() + co * w.size(1);
            for (i64 to = 0; to < To; ++to)
                for (i64 ho = 0; ho < Ho; ++ho) {
                    std::memset(acc, 0, sizeof(T) * static_cast<size_t>(Wo));
                    for (i64 c = 0; c < in_c; ++c)
                        for (int kt_ = 0; kt_ < k.t; ++kt_) {
                            const i64 ti = to * stride.t - pad.t + kt_;
                            if (ti < 0 || ti >= Ti) continue;
                            for (int kh_ = 0; kh_ < k.h; ++kh_) {
                                const i64 hi2 = ho * stride.h - pad.h + kh_;
                                if (hi2 < 0 || hi2 >= Hi) continue;
                                const T* wk = wrow + ((c * k.t + kt_) * k.h + kh_) * k.w;
                                const T* base = lanes.row0(c, ti, hi2, Ti, Hi);
                                if (k.w == 7)
                                    fused_row_fwd<7>(acc, wk, base, off.data(), Wo);
                                else
                                    for (int kw_ = 0; kw_ < k.w; ++kw_) {
                                        const T v = wk[kw_];
                                        const T* src = base + off[static_cast<size_t>(kw_)];
#pragma omp simd
                                        for (i64 wo = 0; wo < Wo; ++wo) acc[wo] += v * src[wo];
                                    }
                            }
                        }
                    std::memcpy(yn + (co * To * Ho + to * Ho + ho) * Wo, acc, sizeof(T) * static_cast<size_t>(Wo));
                }
        }
    }

    // per-column lane offsets (parity row + shift) and the guard widths
    struct LanePlan {
        std::vector<i64> off;
        i64 pad_l = 0, pad_r = 0;
    };

    LanePlan lane_plan(i64 Wi, i64 Wo) const {
        const auto plan = column_plan(Wi, Wo);
        const i64 lane_w = (Wi + stride.w - 1) / stride.w;
        LanePlan lp;
        for (const auto& cp : plan) {
            lp.pad_l = std::max(lp.pad_l, -cp.shift);
            lp.pad_r = std::max(lp.pad_r, cp.shift + Wo - lane_w);
        }
        const i64 row_w = lp.pad_l + lane_w + lp.pad_r;
        for (const auto& cp : plan) lp.off.push_back(cp.par * row_w + cp.shift);
        return lp;
    }

    void forward_direct(const Tensor<T>& x, Tensor<T>& y, const std::vector<i64>& os) {
        const i64 N = x.size(0);
        const i64 Ti = x.size(2), Hi = x.size(3), Wi = x.size(4);
        const i64 To = os[2], Ho = os[3], Wo = os[4];
        const LanePlan lp = lane_plan(Wi, Wo);
        if (N >= 2) {
            parallel_for(N, [&](i64 n_lo, i64 n_hi) {
                Lanes lanes;
                raw_vector<T> acc(static_cast<size_t>(Wo));
                for (i64 n = n_lo; n < n_hi; ++n) {
                    lanes.build(x.ptr() + n * in_c * Ti * Hi * Wi, in_c, Ti, Hi, Wi, stride.w, lp.pad_l, lp.pad_r,
                                false);
                    direct_sample_forward(y.ptr() + n * out_c * To * Ho * Wo, lanes, lp.off, Ti, Hi, To, Ho, Wo, 0,
                                          out_c, acc.data());
                }
            });
        } else {
            Lanes lanes;
            lanes.build(x.ptr(), in_c, Ti, Hi, Wi, stride.w, lp.pad_l, lp.pad_r, true);
            parallel_for(out_c, [&](i64 co_lo, i64 co_hi) {
                raw_vector<T> acc(static_cast<size_t>(Wo));
                direct_sample_forward(y.ptr(), lanes, lp.off, Ti, Hi, To, Ho, Wo, co_lo, co_hi, acc.data());
            });
        }
    }

    // weight gradient with the same lane structure; the 7 kernel-column dot
    // products of each gy row fold into one multi-accumulator pass
    void backward_weight_direct(const Tensor<T>& x, const Tensor<T>& gy) {
        const i64 N = x.size(0);
        const i64 Ti = x.size(2), Hi = x.size(3), Wi = x.size(4);
        const i64 To = gy.size(2), Ho = gy.size(3), Wo = gy.size(4);
        if (k.w != 7) throw ConfigError("direct conv backward requires kernel width 7");
        const LanePlan lp = lane_plan(Wi, Wo);
        const i64* off = lp.off.data();
        const i64 wsz = gw.numel();
        std::vector<T> partial(static_cast<size_t>(N * wsz), T(0));
        parallel_for(N, [&](i64 n_lo, i64 n_hi) {
            Lanes lanes;
            for (i64 n = n_lo; n < n_hi; ++n) {
                lanes.build(x.ptr() + n * in_c * Ti * Hi * Wi, in_c, Ti, Hi, Wi, stride.w, lp.pad_l, lp.pad_r,
                            false);
                T* pw = partial.data() + n * wsz;
                for (i64 co = 0; co < out_c; ++co) {
                    const T* gn = gy.ptr() + (n * out_c + co) * To * Ho * Wo;
                    T* pwc = pw + co * w.size(1);
                    for (i64 to = 0; to < To; ++to)
                        for (i64 ho = 0; ho < Ho; ++ho) {
                            const T* grow = gn + (to * Ho + ho) * Wo;
                            for (i64 c = 0; c < in_c; ++c)
                                for (int kt_ = 0; kt_ < k.t; ++kt_) {
                                    const i64 ti = to * stride.t - pad.t + kt_;
                                    if (ti < 0 || ti >= Ti) continue;
                                    for (int kh_ = 0; kh_ < k.h; ++kh_) {
                                        const i64 hi2 = ho * stride.h - pad.h + kh_;
                                        if (hi2 < 0 || hi2 >= Hi) continue;
                                        const T* base = lanes.row0(c, ti, hi2, Ti, Hi);
                                        const T* s0 = base + off[0];
                                        const T* s1 = base + off[1];
                                        const T* s2 = base + off[2];
                                        const T* s3 = base + off[3];
                                        const T* s4 = base + off[4];
                                        const T* s5 = base + off[5];
                                        const T* s6 = base + off[6];
                                        T a0 = 0, a1 = 0, a2 = 0, a3 = 0, a4 = 0, a5 = 0, a6 = 0;
#pragma omp simd reduction(+ : a0, a1, a2, a3, a4, a5, a6)
                                        for (i64 wo = 0; wo < Wo; ++wo) {
                                            const T g = grow[wo];
                                            a0 += g * s0[wo];
                                            a1 += g * s1[wo];
                                            a2 += g * s2[wo];
                                            a3 += g * s3[wo];
                                            a4 += g * s4[wo];
                                            a5 += g * s5[wo];
                                            a6 += g * s6[wo];
                                        }
                                        T* pk = pwc + ((c * k.t + kt_) * k.h + kh_) * k.w;
                                        pk[0] += a0;
                                        pk[1] += a1;
                                        pk[2] += a2;
                                        pk[3] += a3;
                                        pk[4] += a4;
                                        pk[5] += a5;
                                        pk[6] += a6;
                                    }
                                }
                        }
                }
            }
        });
        T* __restrict gwp = gw.ptr();
        for (i64 n = 0; n < N; ++n) {
            const T* __restrict pp = partial.data() + n * wsz;
#pragma omp simd
            for (i64 i = 0; i < wsz; ++i) gwp[i] += pp[i];
        }
    }
};

// ---------------------------------------------------------------------------
// ConvTranspose3d
// ---------------------------------------------------------------------------

template <class T>
struct ConvTranspose3d {
    i64 in_c = 0, out_c = 0;
    Dims3 k, stride, pad, out_pad;
    bool has_bias = false;

    Tensor<T> w; // [in_c, out_c * kvol]
    Tensor<T> b;
    Tensor<T> gw, gb;

    Tensor<T> x_cache;

    ConvTranspose3d() = default;
    ConvTranspose3d(i64 in, i64 out, Dims3 kernel, Dims3 s, Dims3 p, Dims3 op, bool bias = false)
        : in_c(in), out_c(out), k(kernel), stride(s), pad(p), out_pad(op), has_bias(bias) {
        const i64 kvol = i64(k.t) * k.h * k.w;
        w = Tensor<T>({in_c, out_c * kvol});
        gw = Tensor<T>({in_c, out_c * kvol});
        if (has_bias) {
            b = Tensor<T>({out_c});
            gb = Tensor<T>({out_c});
        }
    }

    void init_he(Rng& rng) {
        const double std = std::sqrt(2.0 / static_cast<double>(in_c * k.t * k.h * k.w));
        for (auto& v : w.data) v = static_cast<T>(rng.normal() * std);
        if (has_bias) b.zero();
    }

    std::vector<i64> out_shape(const std::vector<i64>& in) const {
        return {in[0], out_c, convt_out_dim(in[2], k.t, stride.t, pad.t, out_pad.t),
                convt_out_dim(in[3], k.h, stride.h, pad.h, out_pad.h),
                convt_out_dim(in[4], k.w, stride.w, pad.w, out_pad.w)};
    }

    Tensor<T> forward(const Tensor<T>& x, const FwdCtx& ctx) {
        if (x.size(1) != in_c)
            throw ConfigError("ConvTranspose3d: expected " + std::to_string(in_c) + " input channels, got " +
                              std::to_string(x.size(1)));
        auto os = out_shape(x.shape);
        Tensor<T> y(os);
        const i64 N = x.size(0);
        const i64 Pin = x.size(2) * x.size(3) * x.size(4);
        const i64 Pout = os[2] * os[3] * os[4];
        const i64 K = w.size(1); // out_c * kvol
        if (K * Pin * N <= (i64(1) << 23)) {
            raw_vector<T> cols(static_cast<size_t>(K * Pin * N));
            parallel_for(N, [&](i64 n_lo, i64 n_hi) {
                for (i64 n = n_lo; n < n_hi; ++n) {
                    T* c = cols.data() + n * K * Pin;
                    gemm_tn_serial(K, Pin, in_c, w.ptr(), x.ptr() + n * in_c * Pin, c);
                    col2im3d(c, out_c, os[2], os[3], os[4], k, stride, pad, x.size(2), x.size(3), x.size(4),
                             y.ptr() + n * out_c * Pout, false);
                }
            });
        } else {
            raw_vector<T> cols(static_cast<size_t>(K * Pin));
            for (i64 n = 0; n < N; ++n) {
                gemm_tn<T>(K, Pin, in_c, w.ptr(), x.ptr() + n * in_c * Pin, cols.data());
                col2im3d(cols.data(), out_c, os[2], os[3], os[4], k, stride, pad, x.size(2), x.size(3), x.size(4),
                         y.ptr() + n * out_c * Pout, true);
            }
        }
        if (has_bias) {
            parallel_for(N * out_c, [&](i64 lo, i64 hi) {
                for (i64 i = lo; i < hi; ++i) {
                    T* __restrict yp = y.ptr() + i * Pout;
                    const T bv = b[i % out_c];
#pragma omp simd
                    for (i64 j = 0; j < Pout; ++j) yp[j] += bv;
                }
            });
        }
        if (ctx.keep) x_cache = x;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        const Tensor<T>& x = x_cache;
        if (x.numel() == 0) throw ConfigError("ConvTranspose3d: backward without cached forward");
        const i64 N = x.size(0);
        const i64 Pin = x.size(2) * x.size(3) * x.size(4);
        const i64 Pgy = gy.size(2) * gy.size(3) * gy.size(4);
        const i64 K = w.size(1);
        Tensor<T> gx(x.shape);
        if (K * Pin * N <= (i64(1) << 23)) {
            raw_vector<T> cols(static_cast<size_t>(K * Pin * N));
            std::vector<T> partial(static_cast<size_t>(N * gw.numel()), T(0));
            parallel_for(N, [&](i64 n_lo, i64 n_hi) {
                for (i64 n = n_lo; n < n_hi; ++n) {
                    T* c = cols.data() + n * K * Pin;
                    im2col3d(gy.ptr() + n * out_c * Pgy, out_c, gy.size(2), gy.size(3), gy.size(4), k, stride, pad,
                             x.size(2), x.size(3), x.size(4), c, false);
                    const T* xp = x.ptr() + n * in_c * Pin;
                    gemm_nt_serial(in_c, K, Pin, xp, c, partial.data() + n * gw.numel());
                    detail::gemm_nn_range<T>(in_c, Pin, K, w.ptr(), c, gx.ptr() + n * in_c * Pin, false, 0, Pin);
                }
            });
            T* __restrict gwp = gw.ptr();
            const i64 wn = gw.numel();
            for (i64 n = 0; n < N; ++n) {
                const T* __restrict pp = partial.data() + n * wn;
#pragma omp simd
                for (i64 i = 0; i < wn; ++i) gwp[i] += pp[i];
            }
        } else {
            raw_vector<T> cols(static_cast<size_t>(K * Pin));
            for (i64 n = 0; n < N; ++n) {
                im2col3d(gy.ptr() + n * out_c * Pgy, out_c, gy.size(2), gy.size(3), gy.size(4), k, stride, pad,
                         x.size(2), x.size(3), x.size(4), cols.data(), true);
                const T* xp = x.ptr() + n * in_c * Pin;
                gemm_nt<T>(in_c, K, Pin, xp, cols.data(), gw.ptr(), true);
                gemm_nn<T>(in_c, Pin, K, w.ptr(), cols.data(), gx.ptr() + n * in_c * Pin);
            }
        }
        if (has_bias) {
            for (i64 n = 0; n < N; ++n)
                parallel_for(out_c, [&](i64 lo, i64 hi) {
                    for (i64 c = lo; c < hi; ++c) {
                        const T* __restrict gyp = gy.ptr() + (n * out_c + c) * Pgy;
                        T acc = 0;
#pragma omp simd reduction(+ : acc)
                        for (i64 j = 0; j < Pgy; ++j) acc += gyp[j];
                        gb[c] += acc;
                    }
                });
        }
        return gx;
    }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        out.push_back({prefix + ".weight", &w, &gw});
        if (has_bias) out.push_back({prefix + ".bias", &b, &gb});
    }

  private:
    static void gemm_tn_serial(i64 M, i64 Nn, i64 Kk, const T* A, const T* B, T* C) {
        for (i64 m = 0; m < M; ++m) std::memset(C + m * Nn, 0, sizeof(T) * static_cast<size_t>(Nn));
        for (i64 kk2 = 0; kk2 < Kk; ++kk2) {
            const T* arow = A + kk2 * M;
            const T* bb = B + kk2 * Nn;
            for (i64 m = 0; m < M; ++m) {
                const T v = arow[m];
                T* c = C + m * Nn;
#pragma omp simd
                for (i64 n = 0; n < Nn; ++n) c[n] += v * bb[n];
            }
        }
    }

    static void gemm_nt_serial(i64 M, i64 Nn, i64 Kk, const T* A, const T* B, T* C) {
        for (i64 m = 0; m < M; ++m) {
            const T* a = A + m * Kk;
            T* c = C + m * Nn;
            for (i64 n = 0; n < Nn; ++n) {
                const T* bb = B + n * Kk;
                T acc = 0;
#pragma omp simd reduction(+ : acc)
                for (i64 kk2 = 0; kk2 < Kk; ++kk2) acc += a[kk2] * bb[kk2];
                c[n] += acc;
            }
        }
    }
};

} // namespace egogan::nn
