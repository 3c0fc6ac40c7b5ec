#pragma once

#include "egogan/nn.hpp"

namespace egogan {

// lr(epoch) = lr0 * 0.5 * (1 + cos(pi * epoch / total_epochs))
inline double cosine_lr(double lr0, i64 epoch, i64 total_epochs) {
    if (total_epochs <= 0) throw ConfigError("cosine_lr: total_epochs must be positive");
    const double x = 3.14159265358979323846 * static_cast<double>(epoch) / static_cast<double>(total_epochs);
    return lr0 * 0.5 * (1.0 + std::cos(x));
}

// SGD with momentum; weight decay folded into the gradient.
template <class T>
struct SgdState {
    std::vector<Tensor<T>> velocity;
};

template <class T>
void sgd_step(const std::vector<nn::ParamRef<T>>& params, SgdState<T>& st, T lr, T momentum, T weight_decay) {
    if (st.velocity.empty()) {
        st.velocity.reserve(params.size());
        for (auto& p : params) st.velocity.emplace_back(p.value->shape);
    }
    if (st.velocity.size() != params.size()) throw ConfigError("sgd_step: state does not match parameter list");
    for (size_t i = 0; i < params.size(); ++i) {
        T* __restrict v = st.velocity[i].ptr();
        T* __restrict p = params[i].value->ptr();
        const T* __restrict g = params[i].grad->ptr();
        const i64 n = params[i].value->numel();
#pragma omp simd
        for (i64 j = 0; j < n; ++j) {
            v[j] = momentum * v[j] + g[j] + weight_decay * p[j];
            p[j] -= lr * v[j];
        }
    }
}

template <class T>
struct AdamState {
    std::vector<Tensor<T>> m, v;
    i64 t = 0;
};

template <class T>
void adam_step(const std::vector<nn::ParamRef<T>>& params, AdamState<T>& st, T lr, T beta1, T beta2,
               T eps = T(1e-8)) {
    if (st.m.empty()) {
        st.m.reserve(params.size());
        st.v.reserve(params.size());
        for (auto& p : params) {
            st.m.emplace_back(p.value->shape);
            st.v.emplace_back(p.value->shape);
        }
    }
    if (st.m.size() != params.size()) throw ConfigError("adam_step: state does not match parameter list");
    st.t += 1;
    const T bc1 = T(1) - std::pow(beta1, static_cast<T>(st.t));
    const T bc2 = T(1) - std::pow(beta2, static_cast<T>(st.t));
    for (size_t i = 0; i < params.size(); ++i) {
        T* __restrict m = st.m[i].ptr();
        T* __restrict v = st.v[i].ptr();
        T* __restrict p = params[i].value->ptr();
        const T* __restrict g = params[i].grad->ptr();
        const i64 n = params[i].value->numel();
#pragma omp simd
        for (i64 j = 0; j < n; ++j) {
            m[j] = beta1 * m[j] + (T(1) - beta1) * g[j];
            v[j] = beta2 * v[j] + (T(1) - beta2) * g[j] * g[j];
            const T mhat = m[j] / bc1;
            const T vhat = v[j] / bc2;
            p[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

} // namespace egogan
