#pragma once

#include "egogan/nn_conv.hpp"

// Normalization, activations, pooling, and the dense layer. Tensors are
// [N, C, T, H, W]. Each layer owns its parameters, gradients, and whatever
// it cached during the last forward; models are therefore not safe for
// concurrent mutation, matching the training model (single logical thread
// of parameter updates).

namespace egogan::nn {

// ---------------------------------------------------------------------------
// BatchNorm3d
// ---------------------------------------------------------------------------

template <class T>
struct BatchNorm3d {
    i64 c = 0;
    T eps = T(1e-5);
    T momentum = T(0.1);

    Tensor<T> gamma, beta, ggamma, gbeta;
    Tensor<T> running_mean, running_var;

    // cache
    Tensor<T> xhat_cache;
    std::vector<T> inv_std_cache;
    // batch stats from the last batch_stats forward, folded in by commit()
    std::vector<T> batch_mean_, batch_var_;
    bool pending_ = false;

    BatchNorm3d() = default;
    explicit BatchNorm3d(i64 channels) : c(channels) {
        gamma = Tensor<T>({c}, T(1));
        beta = Tensor<T>({c});
        ggamma = Tensor<T>({c});
        gbeta = Tensor<T>({c});
        running_mean = Tensor<T>({c});
        running_var = Tensor<T>({c}, T(1));
    }

    Tensor<T> forward(Tensor<T> x, const FwdCtx& ctx) {
        if (x.size(1) != c) throw ConfigError("BatchNorm3d: channel mismatch");
        const i64 N = x.size(0);
        const i64 S = x.size(2) * x.size(3) * x.size(4);
        const i64 m = N * S;
        Tensor<T> y = std::move(x); // normalized in place
        if (ctx.batch_stats) {
            batch_mean_.assign(static_cast<size_t>(c), T(0));
            batch_var_.assign(static_cast<size_t>(c), T(0));
            if (ctx.keep) {
                xhat_cache = Tensor<T>::uninit(y.shape);
                inv_std_cache.assign(static_cast<size_t>(c), T(0));
            }
            parallel_for(c, [&](i64 lo, i64 hi) {
                for (i64 ch = lo; ch < hi; ++ch) {
                    T mean = 0;
                    for (i64 n = 0; n < N; ++n) {
                        const T* __restrict xp = y.ptr() + (n * c + ch) * S;
                        T acc = 0;
#pragma omp simd reduction(+ : acc)
                        for (i64 i = 0; i < S; ++i) acc += xp[i];
                        mean += acc;
                    }
                    mean /= static_cast<T>(m);
                    T var = 0;
                    for (i64 n = 0; n < N; ++n) {
                        const T* __restrict xp = y.ptr() + (n * c + ch) * S;
                        T acc = 0;
#pragma omp simd reduction(+ : acc)
                        for (i64 i = 0; i < S; ++i) {
                            const T d = xp[i] - mean;
                            acc += d * d;
                        }
                        var += acc;
                    }
                    var /= static_cast<T>(m);
                    batch_mean_[ch] = mean;
                    batch_var_[ch] = var;
                    const T inv = T(1) / std::sqrt(var + eps);
                    const T g = gamma[ch], bb = beta[ch];
                    for (i64 n = 0; n < N; ++n) {
                        T* __restrict yp = y.ptr() + (n * c + ch) * S;
                        if (ctx.keep) {
                            T* __restrict xh = xhat_cache.ptr() + (n * c + ch) * S;
#pragma omp simd
                            for (i64 i = 0; i < S; ++i) {
                                xh[i] = (yp[i] - mean) * inv;
                                yp[i] = g * xh[i] + bb;
                            }
                        } else {
                            // same association as the caching branch, so both
                            // paths round identically
#pragma omp simd
                            for (i64 i = 0; i < S; ++i) {
                                const T xh = (yp[i] - mean) * inv;
                                yp[i] = g * xh + bb;
                            }
                        }
                    }
                    if (ctx.keep) inv_std_cache[ch] = inv;
                }
            });
            pending_ = true;
            if (ctx.update_running) commit();
        } else {
            parallel_for(c, [&](i64 lo, i64 hi) {
                for (i64 ch = lo; ch < hi; ++ch) {
                    const T inv = T(1) / std::sqrt(running_var[ch] + eps);
                    const T g = gamma[ch], bb = beta[ch], mu = running_mean[ch];
                    for (i64 n = 0; n < N; ++n) {
                        T* __restrict yp = y.ptr() + (n * c + ch) * S;
#pragma omp simd
                        for (i64 i = 0; i < S; ++i) {
                            const T xh = (yp[i] - mu) * inv;
                            yp[i] = g * xh + bb;
                        }
                    }
                }
            });
        }
        return y;
    }

    // fold the cached batch statistics into the running buffers
    void commit() {
        if (!pending_) return;
        for (i64 ch = 0; ch < c; ++ch) {
            running_mean[ch] = (T(1) - momentum) * running_mean[ch] + momentum * batch_mean_[ch];
            running_var[ch] = (T(1) - momentum) * running_var[ch] + momentum * batch_var_[ch];
        }
        pending_ = false;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        const i64 N = gy.size(0);
        const i64 S = gy.size(2) * gy.size(3) * gy.size(4);
        const i64 m = N * S;
        Tensor<T> gx(gy.shape);
        parallel_for(c, [&](i64 lo, i64 hi) {
            for (i64 ch = lo; ch < hi; ++ch) {
                T sum_gy = 0, sum_gy_xhat = 0;
                for (i64 n = 0; n < N; ++n) {
                    const T* gp = gy.ptr() + (n * c + ch) * S;
                    const T* xh = xhat_cache.ptr() + (n * c + ch) * S;
                    for (i64 i = 0; i < S; ++i) {
                        sum_gy += gp[i];
                        sum_gy_xhat += gp[i] * xh[i];
                    }
                }
                ggamma[ch] += sum_gy_xhat;
                gbeta[ch] += sum_gy;
                const T g = gamma[ch];
                const T inv = inv_std_cache[ch];
                const T mean_gy = sum_gy / static_cast<T>(m);
                const T mean_gy_xhat = sum_gy_xhat / static_cast<T>(m);
                for (i64 n = 0; n < N; ++n) {
                    const T* gp = gy.ptr() + (n * c + ch) * S;
                    const T* xh = xhat_cache.ptr() + (n * c + ch) * S;
                    T* gxp = gx.ptr() + (n * c + ch) * S;
                    for (i64 i = 0; i < S; ++i) gxp[i] = g * inv * (gp[i] - mean_gy - xh[i] * mean_gy_xhat);
                }
            }
        });
        return gx;
    }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        out.push_back({prefix + ".gamma", &gamma, &ggamma});
        out.push_back({prefix + ".beta", &beta, &gbeta});
    }

    void collect_buffers(const std::string& prefix, std::vector<BufferRef<T>>& out) {
        out.push_back({prefix + ".running_mean", &running_mean});
        out.push_back({prefix + ".running_var", &running_var});
    }
};

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

template <class T>
struct ReLU {
    raw_vector<u8> mask_;

    Tensor<T> forward(Tensor<T> x, const FwdCtx& ctx) {
        Tensor<T> y = std::move(x);
        if (ctx.keep) mask_.resize(static_cast<size_t>(y.numel()));
        T* __restrict p = y.ptr();
        u8* __restrict m = mask_.data();
        if (ctx.keep) {
            parallel_for(y.numel(), [&](i64 lo, i64 hi) {
#pragma omp simd
                for (i64 i = lo; i < hi; ++i) {
                    const T v = p[i];
                    m[i] = v > T(0);
                    p[i] = v > T(0) ? v : T(0);
                }
            });
        } else {
            parallel_for(y.numel(), [&](i64 lo, i64 hi) {
#pragma omp simd
                for (i64 i = lo; i < hi; ++i) p[i] = p[i] > T(0) ? p[i] : T(0);
            });
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx = Tensor<T>::uninit(gy.shape);
        const T* __restrict g = gy.ptr();
        const u8* __restrict m = mask_.data();
        T* __restrict out = gx.ptr();
        parallel_for(gy.numel(), [&](i64 lo, i64 hi) {
#pragma omp simd
            for (i64 i = lo; i < hi; ++i) out[i] = m[i] ? g[i] : T(0);
        });
        return gx;
    }
};

template <class T>
struct Tanh {
    Tensor<T> y_cache;

    Tensor<T> forward(Tensor<T> x, const FwdCtx& ctx) {
        Tensor<T> y = std::move(x);
        T* __restrict p = y.ptr();
        parallel_for(y.numel(), [&](i64 lo, i64 hi) {
            for (i64 i = lo; i < hi; ++i) p[i] = std::tanh(p[i]);
        });
        if (ctx.keep) y_cache = y;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx = Tensor<T>::uninit(gy.shape);
        const T* __restrict g = gy.ptr();
        const T* __restrict yc = y_cache.ptr();
        T* __restrict out = gx.ptr();
        parallel_for(gy.numel(), [&](i64 lo, i64 hi) {
#pragma omp simd
            for (i64 i = lo; i < hi; ++i) out[i] = g[i] * (T(1) - yc[i] * yc[i]);
        });
        return gx;
    }
};

template <class T>
struct Sigmoid {
    Tensor<T> y_cache;

    Tensor<T> forward(Tensor<T> x, const FwdCtx& ctx) {
        Tensor<T> y = std::move(x);
        T* __restrict p = y.ptr();
        parallel_for(y.numel(), [&](i64 lo, i64 hi) {
            for (i64 i = lo; i < hi; ++i) p[i] = T(1) / (T(1) + std::exp(-p[i]));
        });
        if (ctx.keep) y_cache = y;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx = Tensor<T>::uninit(gy.shape);
        const T* __restrict g = gy.ptr();
        const T* __restrict yc = y_cache.ptr();
        T* __restrict out = gx.ptr();
        parallel_for(gy.numel(), [&](i64 lo, i64 hi) {
#pragma omp simd
            for (i64 i = lo; i < hi; ++i) out[i] = g[i] * yc[i] * (T(1) - yc[i]);
        });
        return gx;
    }
};

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

template <class T>
struct MaxPool3d {
    Dims3 k, stride, pad;
    raw_vector<i64> argmax_;
    std::vector<i64> in_shape_;

    MaxPool3d() = default;
    MaxPool3d(Dims3 kernel, Dims3 s, Dims3 p = {0, 0, 0}) : k(kernel), stride(s), pad(p) {}

    std::vector<i64> out_shape(const std::vector<i64>& in) const {
        return {in[0], in[1], conv_out_dim(in[2], k.t, stride.t, pad.t), conv_out_dim(in[3], k.h, stride.h, pad.h),
                conv_out_dim(in[4], k.w, stride.w, pad.w)};
    }

    Tensor<T> forward(const Tensor<T>& x, const FwdCtx& ctx) {
        auto os = out_shape(x.shape);
        Tensor<T> y = Tensor<T>::uninit(os);
        const i64 NC = x.size(0) * x.size(1);
        const i64 Ti = x.size(2), Hi = x.size(3), Wi = x.size(4);
        const i64 To = os[2], Ho = os[3], Wo = os[4];
        if (ctx.keep) {
            argmax_.resize(static_cast<size_t>(y.numel()));
            in_shape_ = x.shape;
        }
        const bool keep = ctx.keep;
        parallel_for(NC, [&](i64 lo, i64 hi_) {
            for (i64 nc = lo; nc < hi_; ++nc) {
                const T* xp = x.ptr() + nc * Ti * Hi * Wi;
                T* yp = y.ptr() + nc * To * Ho * Wo;
                i64* am = keep ? argmax_.data() + nc * To * Ho * Wo : nullptr;
                for (i64 to = 0; to < To; ++to)
                    for (i64 ho = 0; ho < Ho; ++ho)
                        for (i64 wo = 0; wo < Wo; ++wo) {
                            T best = -std::numeric_limits<T>::infinity();
                            i64 best_i = -1;
                            for (int kt_ = 0; kt_ < k.t; ++kt_) {
                                const i64 ti = to * stride.t - pad.t + kt_;
                                if (ti < 0 || ti >= Ti) continue;
                                for (int kh_ = 0; kh_ < k.h; ++kh_) {
                                    const i64 hi2 = ho * stride.h - pad.h + kh_;
                                    if (hi2 < 0 || hi2 >= Hi) continue;
                                    for (int kw_ = 0; kw_ < k.w; ++kw_) {
                                        const i64 wi = wo * stride.w - pad.w + kw_;
                                        if (wi < 0 || wi >= Wi) continue;
                                        const i64 idx = (ti * Hi + hi2) * Wi + wi;
                                        if (xp[idx] > best) {
                                            best = xp[idx];
                                            best_i = idx;
                                        }
                                    }
                                }
                            }
                            const i64 o = (to * Ho + ho) * Wo + wo;
                            yp[o] = best;
                            if (keep) am[o] = best_i;
                        }
            }
        });
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx(in_shape_);
        const i64 NC = gy.size(0) * gy.size(1);
        const i64 Pi = in_shape_[2] * in_shape_[3] * in_shape_[4];
        const i64 Po = gy.size(2) * gy.size(3) * gy.size(4);
        parallel_for(NC, [&](i64 lo, i64 hi) {
            for (i64 nc = lo; nc < hi; ++nc) {
                const T* gp = gy.ptr() + nc * Po;
                const i64* am = argmax_.data() + nc * Po;
                T* gxp = gx.ptr() + nc * Pi;
                for (i64 o = 0; o < Po; ++o)
                    if (am[o] >= 0) gxp[am[o]] += gp[o];
            }
        });
        return gx;
    }
};

// Adaptive average pooling with the usual floor/ceil window rule; also used
// to resample discriminator inputs onto the native 7x7 grid.
template <class T>
struct AdaptiveAvgPool3d {
    Dims3 out;
    std::vector<i64> in_shape_;

    AdaptiveAvgPool3d() = default;
    explicit AdaptiveAvgPool3d(Dims3 o) : out(o) {}

    static void window(i64 i, i64 in, i64 on, i64& lo, i64& hi) {
        lo = (i * in) / on;
        hi = ((i + 1) * in + on - 1) / on;
    }

    Tensor<T> forward(const Tensor<T>& x, const FwdCtx& ctx) {
        const i64 NC = x.size(0) * x.size(1);
        const i64 Ti = x.size(2), Hi = x.size(3), Wi = x.size(4);
        Tensor<T> y = Tensor<T>::uninit({x.size(0), x.size(1), out.t, out.h, out.w});
        if (ctx.keep) in_shape_ = x.shape;
        parallel_for(NC, [&](i64 lo_, i64 hi_) {
            for (i64 nc = lo_; nc < hi_; ++nc) {
                const T* xp = x.ptr() + nc * Ti * Hi * Wi;
                T* yp = y.ptr() + nc * out.t * out.h * out.w;
                for (i64 ot = 0; ot < out.t; ++ot) {
                    i64 t0, t1;
                    window(ot, Ti, out.t, t0, t1);
                    for (i64 oh = 0; oh < out.h; ++oh) {
                        i64 h0, h1;
                        window(oh, Hi, out.h, h0, h1);
                        for (i64 ow = 0; ow < out.w; ++ow) {
                            i64 w0, w1;
                            window(ow, Wi, out.w, w0, w1);
                            T acc = 0;
                            for (i64 t = t0; t < t1; ++t)
                                for (i64 h = h0; h < h1; ++h)
                                    for (i64 w2 = w0; w2 < w1; ++w2) acc += xp[(t * Hi + h) * Wi + w2];
                            yp[(ot * out.h + oh) * out.w + ow] =
                                acc / static_cast<T>((t1 - t0) * (h1 - h0) * (w1 - w0));
                        }
                    }
                }
            }
        });
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx(in_shape_);
        const i64 NC = gy.size(0) * gy.size(1);
        const i64 Ti = in_shape_[2], Hi = in_shape_[3], Wi = in_shape_[4];
        parallel_for(NC, [&](i64 lo_, i64 hi_) {
            for (i64 nc = lo_; nc < hi_; ++nc) {
                const T* gp = gy.ptr() + nc * out.t * out.h * out.w;
                T* gxp = gx.ptr() + nc * Ti * Hi * Wi;
                for (i64 ot = 0; ot < out.t; ++ot) {
                    i64 t0, t1;
                    window(ot, Ti, out.t, t0, t1);
                    for (i64 oh = 0; oh < out.h; ++oh) {
                        i64 h0, h1;
                        window(oh, Hi, out.h, h0, h1);
                        for (i64 ow = 0; ow < out.w; ++ow) {
                            i64 w0, w1;
                            window(ow, Wi, out.w, w0, w1);
                            const T g = gp[(ot * out.h + oh) * out.w + ow] /
                                        static_cast<T>((t1 - t0) * (h1 - h0) * (w1 - w0));
                            for (i64 t = t0; t < t1; ++t)
                                for (i64 h = h0; h < h1; ++h)
                                    for (i64 w2 = w0; w2 < w1; ++w2) gxp[(t * Hi + h) * Wi + w2] += g;
                        }
                    }
                }
            }
        });
        return gx;
    }
};

// ---------------------------------------------------------------------------
// Linear on [N, in] tensors
// ---------------------------------------------------------------------------

template <class T>
struct Linear {
    i64 in_f = 0, out_f = 0;
    Tensor<T> w, b, gw, gb; // w: [out, in]
    Tensor<T> x_cache;

    Linear() = default;
    Linear(i64 in, i64 out) : in_f(in), out_f(out) {
        w = Tensor<T>({out_f, in_f});
        b = Tensor<T>({out_f});
        gw = Tensor<T>({out_f, in_f});
        gb = Tensor<T>({out_f});
    }

    void init_he(Rng& rng) {
        const double std = std::sqrt(2.0 / static_cast<double>(in_f));
        for (auto& v : w.data) v = static_cast<T>(rng.normal() * std);
        b.zero();
    }

    Tensor<T> forward(const Tensor<T>& x, const FwdCtx& ctx) {
        if (x.size(1) != in_f) throw ConfigError("Linear: feature mismatch");
        const i64 N = x.size(0);
        Tensor<T> y({N, out_f});
        gemm_nt<T>(N, out_f, in_f, x.ptr(), w.ptr(), y.ptr());
        for (i64 n = 0; n < N; ++n)
            for (i64 o = 0; o < out_f; ++o) y[n * out_f + o] += b[o];
        if (ctx.keep) x_cache = x;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        const i64 N = gy.size(0);
        Tensor<T> gx({N, in_f});
        gemm_tn<T>(out_f, in_f, N, gy.ptr(), x_cache.ptr(), gw.ptr(), true);
        for (i64 n = 0; n < N; ++n)
            for (i64 o = 0; o < out_f; ++o) gb[o] += gy[n * out_f + o];
        gemm_nn<T>(N, in_f, out_f, gy.ptr(), w.ptr(), gx.ptr());
        return gx;
    }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
        out.push_back({prefix + ".weight", &w, &gw});
        out.push_back({prefix + ".bias", &b, &gb});
    }
};

// ---------------------------------------------------------------------------
// small graph helpers
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    for (int d : {0, 2, 3, 4})
        if (a.size(d) != b.size(d)) throw ConfigError("concat_channels: non-channel dims differ");
    Tensor<T> y({a.size(0), a.size(1) + b.size(1), a.size(2), a.size(3), a.size(4)});
    const i64 S = a.size(2) * a.size(3) * a.size(4);
    for (i64 n = 0; n < a.size(0); ++n) {
        std::memcpy(y.ptr() + n * y.size(1) * S, a.ptr() + n * a.size(1) * S,
                    sizeof(T) * static_cast<size_t>(a.size(1) * S));
        std::memcpy(y.ptr() + (n * y.size(1) + a.size(1)) * S, b.ptr() + n * b.size(1) * S,
                    sizeof(T) * static_cast<size_t>(b.size(1) * S));
    }
    return y;
}

template <class T>
void split_channels(const Tensor<T>& g, i64 ca, Tensor<T>& ga, Tensor<T>& gb) {
    const i64 cb = g.size(1) - ca;
    ga = Tensor<T>({g.size(0), ca, g.size(2), g.size(3), g.size(4)});
    gb = Tensor<T>({g.size(0), cb, g.size(2), g.size(3), g.size(4)});
    const i64 S = g.size(2) * g.size(3) * g.size(4);
    for (i64 n = 0; n < g.size(0); ++n) {
        std::memcpy(ga.ptr() + n * ca * S, g.ptr() + n * g.size(1) * S, sizeof(T) * static_cast<size_t>(ca * S));
        std::memcpy(gb.ptr() + n * cb * S, g.ptr() + (n * g.size(1) + ca) * S,
                    sizeof(T) * static_cast<size_t>(cb * S));
    }
}

template <class T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "add_inplace");
    T* __restrict pa = a.ptr();
    const T* __restrict pb = b.ptr();
    parallel_for(a.numel(), [&](i64 lo, i64 hi) {
#pragma omp simd
        for (i64 i = lo; i < hi; ++i) pa[i] += pb[i];
    });
}

} // namespace egogan::nn
