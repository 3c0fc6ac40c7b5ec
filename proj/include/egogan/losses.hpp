#pragma once

#include "egogan/tensor.hpp"

namespace egogan {

template <class T>
struct LossBreakdown {
    T l_d = 0, l_g_adv = 0, l_g_l1 = 0, l_g_total = 0, l_seg = 0;
};

namespace losses {

// Probabilities are clamped this far from {0,1}; the clamp is part of the
// loss definition, so its gradient is zero outside the open interval.
template <class T>
constexpr T kProbEps = T(1e-7);

template <class T>
inline T clamp_prob(T p) {
    return std::min(std::max(p, kProbEps<T>), T(1) - kProbEps<T>);
}

template <class T>
inline bool clamped(T p) {
    return p <= kProbEps<T> || p >= T(1) - kProbEps<T>;
}

// L_d = mean(-ln d_real) + mean(-ln(1 - d_fake))
template <class T>
struct DiscriminatorLoss {
    T value = 0;
    Tensor<T> grad_real, grad_fake;
};

template <class T>
DiscriminatorLoss<T> discriminator_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake) {
    check_same_shape(d_real, d_fake, "discriminator_loss");
    const i64 n = d_real.numel();
    if (n == 0) throw ConfigError("discriminator_loss: empty batch");
    DiscriminatorLoss<T> out;
    out.grad_real = Tensor<T>(d_real.shape);
    out.grad_fake = Tensor<T>(d_fake.shape);
    double acc = 0;
    for (i64 i = 0; i < n; ++i) {
        const T r = clamp_prob(d_real[i]);
        const T f = clamp_prob(d_fake[i]);
        acc += -std::log(static_cast<double>(r)) - std::log(static_cast<double>(1 - f));
        if (!clamped(d_real[i])) out.grad_real[i] = -T(1) / (r * static_cast<T>(n));
        if (!clamped(d_fake[i])) out.grad_fake[i] = T(1) / ((T(1) - f) * static_cast<T>(n));
    }
    out.value = static_cast<T>(acc / static_cast<double>(n));
    return out;
}

// L_g = mean(-ln d_fake) + lambda * mean(|m_g - m_r|)
template <class T>
struct GeneratorLoss {
    T value = 0, adv = 0, l1 = 0;
    Tensor<T> grad_fake; // wrt discriminator outputs
    Tensor<T> grad_flow; // wrt m_g
};

template <class T>
GeneratorLoss<T> generator_loss(const Tensor<T>& d_fake, const Tensor<T>& m_g, const Tensor<T>& m_r, T lambda) {
    check_same_shape(m_g, m_r, "generator_loss");
    if (lambda < 0) throw ConfigError("generator_loss: lambda must be nonnegative");
    GeneratorLoss<T> out;
    out.grad_fake = Tensor<T>(d_fake.shape);
    out.grad_flow = Tensor<T>(m_g.shape);
    const i64 nb = d_fake.numel();
    if (nb == 0) throw ConfigError("generator_loss: empty batch");
    double adv = 0;
    for (i64 i = 0; i < nb; ++i) {
        const T f = clamp_prob(d_fake[i]);
        adv += -std::log(static_cast<double>(f));
        if (!clamped(d_fake[i])) out.grad_fake[i] = -T(1) / (f * static_cast<T>(nb));
    }
    out.adv = static_cast<T>(adv / static_cast<double>(nb));
    const i64 ne = m_g.numel();
    double l1 = 0;
    for (i64 i = 0; i < ne; ++i) {
        const T d = m_g[i] - m_r[i];
        l1 += std::abs(static_cast<double>(d));
        out.grad_flow[i] = lambda * (d > 0 ? T(1) : (d < 0 ? T(-1) : T(0))) / static_cast<T>(ne);
    }
    out.l1 = static_cast<T>(l1 / static_cast<double>(ne));
    out.value = out.adv + lambda * out.l1;
    return out;
}

// Mean binary cross-entropy over every pixel, horizon, and batch entry,
// computed from logits in the log-sum-exp form.
template <class T>
struct SegmentationLoss {
    T value = 0;
    Tensor<T> grad_logits;
};

template <class T>
SegmentationLoss<T> segmentation_loss(const Tensor<T>& logits, const Tensor<T>& gt) {
    check_same_shape(logits, gt, "segmentation_loss");
    const i64 n = logits.numel();
    if (n == 0) throw ConfigError("segmentation_loss: empty input");
    for (i64 i = 0; i < n; ++i)
        if (gt[i] != T(0) && gt[i] != T(1))
            throw ConfigError("segmentation_loss: ground truth must be binary (found " + std::to_string(gt[i]) + ")");
    SegmentationLoss<T> out;
    out.grad_logits = Tensor<T>::uninit(logits.shape);
    const T* __restrict zp = logits.ptr();
    const T* __restrict yp = gt.ptr();
    T* __restrict gp = out.grad_logits.ptr();
    double acc = 0;
#pragma omp simd reduction(+ : acc)
    for (i64 i = 0; i < n; ++i) {
        const T z = zp[i];
        const T y = yp[i];
        acc += static_cast<double>(std::max(z, T(0)) - z * y + std::log1p(std::exp(-std::abs(z))));
        const T s = T(1) / (T(1) + std::exp(-z));
        gp[i] = (s - y) / static_cast<T>(n);
    }
    out.value = static_cast<T>(acc / static_cast<double>(n));
    return out;
}

// mean absolute difference with subgradient sign(m_g - m_r)
template <class T>
struct L1Loss {
    T value = 0;
    Tensor<T> grad;
};

template <class T>
L1Loss<T> l1_mean(const Tensor<T>& m_g, const Tensor<T>& m_r) {
    check_same_shape(m_g, m_r, "l1_mean");
    L1Loss<T> out;
    out.grad = Tensor<T>(m_g.shape);
    const i64 n = m_g.numel();
    double acc = 0;
    for (i64 i = 0; i < n; ++i) {
        const T d = m_g[i] - m_r[i];
        acc += std::abs(static_cast<double>(d));
        out.grad[i] = (d > 0 ? T(1) : (d < 0 ? T(-1) : T(0))) / static_cast<T>(n);
    }
    out.value = static_cast<T>(acc / static_cast<double>(n));
    return out;
}

// adversarial term reused by the PIXELGAN segmentation step
template <class T>
struct AdvTerm {
    T value = 0;
    Tensor<T> grad_fake;
};

template <class T>
AdvTerm<T> fool_discriminator_loss(const Tensor<T>& d_fake) {
    AdvTerm<T> out;
    out.grad_fake = Tensor<T>(d_fake.shape);
    const i64 nb = d_fake.numel();
    if (nb == 0) throw ConfigError("fool_discriminator_loss: empty batch");
    double adv = 0;
    for (i64 i = 0; i < nb; ++i) {
        const T f = clamp_prob(d_fake[i]);
        adv += -std::log(static_cast<double>(f));
        if (!clamped(d_fake[i])) out.grad_fake[i] = -T(1) / (f * static_cast<T>(nb));
    }
    out.value = static_cast<T>(adv / static_cast<double>(nb));
    return out;
}

} // namespace losses
} // namespace egogan
