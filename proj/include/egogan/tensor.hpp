#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <vector>

#include "egogan/common.hpp"

namespace egogan {

// vector allocator that default-initializes (i.e. leaves PODs alone), so
// buffers that are fully overwritten are not zero-filled first
template <class T>
struct uninit_allocator : std::allocator<T> {
    template <class U>
    struct rebind {
        using other = uninit_allocator<U>;
    };
    template <class U, class... Args>
    void construct(U* p, Args&&... args) {
        if constexpr (sizeof...(Args) == 0)
            ::new (static_cast<void*>(p)) U;
        else
            ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
    }
};

template <class T>
using raw_vector = std::vector<T, uninit_allocator<T>>;

// Dense row-major tensor. Model code uses the [N, C, T, H, W] convention.
template <class T>
struct Tensor {
    std::vector<i64> shape;
    raw_vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<i64> s) : shape(std::move(s)) {
        data.resize(static_cast<size_t>(count(shape)));
        std::fill(data.begin(), data.end(), T(0));
    }
    Tensor(std::vector<i64> s, T fill) : shape(std::move(s)) {
        data.resize(static_cast<size_t>(count(shape)));
        std::fill(data.begin(), data.end(), fill);
    }

    struct uninit_tag {};
    Tensor(std::vector<i64> s, uninit_tag) : shape(std::move(s)) { data.resize(static_cast<size_t>(count(shape))); }
    static Tensor uninit(std::vector<i64> s) { return Tensor(std::move(s), uninit_tag{}); }

    static i64 count(const std::vector<i64>& s) {
        i64 n = 1;
        for (i64 d : s) {
            if (d < 0) throw ConfigError("tensor dimension must be nonnegative");
            n *= d;
        }
        return n;
    }

    static Tensor zeros(std::vector<i64> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<i64> s, T v) { return Tensor(std::move(s), v); }

    i64 numel() const { return static_cast<i64>(data.size()); }
    i64 dim() const { return static_cast<i64>(shape.size()); }
    i64 size(i64 i) const { return shape.at(static_cast<size_t>(i)); }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    T& operator[](i64 i) { return data[static_cast<size_t>(i)]; }
    const T& operator[](i64 i) const { return data[static_cast<size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    Tensor reshaped(std::vector<i64> s) const {
        if (count(s) != numel()) throw ConfigError("reshape: element count mismatch");
        Tensor out;
        out.shape = std::move(s);
        out.data = data;
        return out;
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }
    void zero() { fill(T(0)); }

    bool all_finite() const {
        for (const T& v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
        os << "]";
        return os.str();
    }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* where) {
    if (!a.same_shape(b))
        throw ConfigError(std::string(where) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

} // namespace egogan
