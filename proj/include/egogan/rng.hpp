#pragma once

#include <cmath>

#include "egogan/common.hpp"

namespace egogan {

// splitmix64; used both as a stream generator and as a stateless hash.
inline u64 splitmix64(u64 x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline u64 hash_combine(u64 a, u64 b) { return splitmix64(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2))); }

// Deterministic PRNG. Every consumer derives its own stream so that data
// loading, init, and augmentation draws never interleave.
struct Rng {
    u64 state = 0x853c49e6748fea9bULL;

    Rng() = default;
    explicit Rng(u64 seed) : state(splitmix64(seed ^ 0xda3e39cb94b95bdbULL)) {}

    static Rng stream(u64 seed, u64 key) { return Rng(hash_combine(seed, key)); }

    u64 next_u64() {
        state += 0x9e3779b97f4a7c15ULL;
        u64 z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    u32 next_u32() { return static_cast<u32>(next_u64() >> 32); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    i64 uniform_int(i64 lo, i64 hi_inclusive) {
        return lo + static_cast<i64>(next_u64() % static_cast<u64>(hi_inclusive - lo + 1));
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller; consumes exactly two draws per pair of normals.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    template <class It>
    void shuffle(It first, It last) {
        i64 n = static_cast<i64>(last - first);
        for (i64 i = n - 1; i > 0; --i) {
            i64 j = uniform_int(0, i);
            std::swap(first[i], first[j]);
        }
    }

    // public so checkpoints can capture the full stream state
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace egogan
