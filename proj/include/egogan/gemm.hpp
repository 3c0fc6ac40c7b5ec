#pragma once

#include <cstring>
#include <vector>

#include "egogan/parallel.hpp"
#include "egogan/tensor.hpp"

namespace egogan {

// Row-major GEMM kernels sized for this project's conv workloads
// (M = channels, K = channels x kernel volume, N = output positions).
// Accumulation order over k is fixed per output element, so results do not
// depend on the number of threads.

namespace detail {

// strided-row variants used by the temporal-conv fast path: B rows are ldb
// apart, C rows ldc apart (A stays dense)
template <class T>
void gemm_nn_strided_acc(i64 M, i64 N, i64 K, const T* __restrict A, const T* __restrict B, i64 ldb, T* __restrict C,
                         i64 ldc) {
    for (i64 m = 0; m < M; ++m) {
        const T* a = A + m * K;
        T* c = C + m * ldc;
        for (i64 kk = 0; kk < K; ++kk) {
            const T v = a[kk];
            const T* b = B + kk * ldb;
#pragma omp simd
            for (i64 n = 0; n < N; ++n) c[n] += v * b[n];
        }
    }
}

template <class T>
void gemm_nt_strided_acc(i64 M, i64 N, i64 K, const T* __restrict A, i64 lda, const T* __restrict B, i64 ldb,
                         T* __restrict C) {
    for (i64 m = 0; m < M; ++m) {
        const T* a = A + m * lda;
        T* c = C + m * N;
        for (i64 n = 0; n < N; ++n) {
            const T* b = B + n * ldb;
            T acc = 0;
#pragma omp simd reduction(+ : acc)
            for (i64 kk = 0; kk < K; ++kk) acc += a[kk] * b[kk];
            c[n] += acc;
        }
    }
}

// Column-chunked kernel: for each N-chunk the B panel stays cache-resident
// while all 4-row blocks of A stream over it.
template <class T>
void gemm_nn_range(i64 M, i64 N, i64 K, const T* __restrict A, const T* __restrict B, T* __restrict C,
                   bool accumulate, i64 n_lo, i64 n_hi) {
    constexpr i64 NB = 128;
    constexpr i64 MB = 4;
    for (i64 nc = n_lo; nc < n_hi; nc += NB) {
        const i64 nb = std::min(NB, n_hi - nc);
        for (i64 m0 = 0; m0 < M; m0 += MB) {
            const i64 mb = std::min(MB, M - m0);
            if (mb == MB) {
                T acc0[NB], acc1[NB], acc2[NB], acc3[NB];
                if (accumulate) {
                    std::memcpy(acc0, C + (m0 + 0) * N + nc, sizeof(T) * static_cast<size_t>(nb));
                    std::memcpy(acc1, C + (m0 + 1) * N + nc, sizeof(T) * static_cast<size_t>(nb));
                    std::memcpy(acc2, C + (m0 + 2) * N + nc, sizeof(T) * static_cast<size_t>(nb));
                    std::memcpy(acc3, C + (m0 + 3) * N + nc, sizeof(T) * static_cast<size_t>(nb));
                } else {
                    std::memset(acc0, 0, sizeof(T) * static_cast<size_t>(nb));
                    std::memset(acc1, 0, sizeof(T) * static_cast<size_t>(nb));
                    std::memset(acc2, 0, sizeof(T) * static_cast<size_t>(nb));
                    std::memset(acc3, 0, sizeof(T) * static_cast<size_t>(nb));
                }
                const T* a0 = A + (m0 + 0) * K;
                const T* a1 = A + (m0 + 1) * K;
                const T* a2 = A + (m0 + 2) * K;
                const T* a3 = A + (m0 + 3) * K;
                for (i64 k = 0; k < K; ++k) {
                    const T* b = B + k * N + nc;
                    const T v0 = a0[k], v1 = a1[k], v2 = a2[k], v3 = a3[k];
#pragma omp simd
                    for (i64 n = 0; n < nb; ++n) {
                        acc0[n] += v0 * b[n];
                        acc1[n] += v1 * b[n];
                        acc2[n] += v2 * b[n];
                        acc3[n] += v3 * b[n];
                    }
                }
                std::memcpy(C + (m0 + 0) * N + nc, acc0, sizeof(T) * static_cast<size_t>(nb));
                std::memcpy(C + (m0 + 1) * N + nc, acc1, sizeof(T) * static_cast<size_t>(nb));
                std::memcpy(C + (m0 + 2) * N + nc, acc2, sizeof(T) * static_cast<size_t>(nb));
                std::memcpy(C + (m0 + 3) * N + nc, acc3, sizeof(T) * static_cast<size_t>(nb));
            } else {
                for (i64 r = 0; r < mb; ++r) {
                    T acc[NB];
                    if (accumulate)
                        std::memcpy(acc, C + (m0 + r) * N + nc, sizeof(T) * static_cast<size_t>(nb));
                    else
                        std::memset(acc, 0, sizeof(T) * static_cast<size_t>(nb));
                    const T* a = A + (m0 + r) * K;
                    for (i64 k = 0; k < K; ++k) {
                        const T v = a[k];
                        const T* b = B + k * N + nc;
#pragma omp simd
                        for (i64 n = 0; n < nb; ++n) acc[n] += v * b[n];
                    }
                    std::memcpy(C + (m0 + r) * N + nc, acc, sizeof(T) * static_cast<size_t>(nb));
                }
            }
        }
    }
}

} // namespace detail

// C[MxN] (+)= A[MxK] * B[KxN]
template <class T>
void gemm_nn(i64 M, i64 N, i64 K, const T* A, const T* B, T* C, bool accumulate = false) {
    if (M == 0 || N == 0) return;
    if (K == 0) {
        if (!accumulate) std::memset(C, 0, sizeof(T) * static_cast<size_t>(M * N));
        return;
    }
    if (M * N * K < 100000) {
        detail::gemm_nn_range(M, N, K, A, B, C, accumulate, 0, N);
        return;
    }
#pragma omp parallel
    {
        const i64 nt = omp_get_num_threads();
        const i64 id = omp_get_thread_num();
        // chunk-aligned split of columns
        const i64 chunks = (N + 127) / 128;
        const i64 per = (chunks + nt - 1) / nt;
        const i64 n_lo = std::min(id * per * 128, N);
        const i64 n_hi = std::min((id + 1) * per * 128, N);
        if (n_lo < n_hi) detail::gemm_nn_range(M, N, K, A, B, C, accumulate, n_lo, n_hi);
    }
}

// C[MxN] (+)= A[MxK] * B[NxK]^T   (dot-product form; B rows contiguous)
template <class T>
void gemm_nt(i64 M, i64 N, i64 K, const T* A, const T* B, T* C, bool accumulate = false) {
    if (M == 0 || N == 0) return;
    // block rows of B so each panel is reused across every row of A
    const i64 NBLK = std::max<i64>(1, (1 << 18) / std::max<i64>(1, static_cast<i64>(sizeof(T)) * K));
    const i64 blocks = (N + NBLK - 1) / NBLK;
    auto body = [&](i64 b_lo, i64 b_hi) {
        for (i64 blk = b_lo; blk < b_hi; ++blk) {
            const i64 n0 = blk * NBLK;
            const i64 n1 = std::min(n0 + NBLK, N);
            for (i64 m = 0; m < M; ++m) {
                const T* a = A + m * K;
                T* c = C + m * N;
                for (i64 n = n0; n < n1; ++n) {
                    const T* b = B + n * K;
                    T acc = 0;
#pragma omp simd reduction(+ : acc)
                    for (i64 k = 0; k < K; ++k) acc += a[k] * b[k];
                    c[n] = accumulate ? c[n] + acc : acc;
                }
            }
        }
    };
    if (M * N * K < 100000)
        body(0, blocks);
    else
        parallel_for(blocks, body);
}

// C[MxN] (+)= A[KxM]^T * B[KxN]; A is transposed into scratch so the fast
// nn kernel does the work (A is always a small weight matrix here).
template <class T>
void gemm_tn(i64 M, i64 N, i64 K, const T* A, const T* B, T* C, bool accumulate = false) {
    if (M == 0 || N == 0) return;
    std::vector<T> at(static_cast<size_t>(M * K));
    for (i64 k = 0; k < K; ++k)
        for (i64 m = 0; m < M; ++m) at[static_cast<size_t>(m * K + k)] = A[k * M + m];
    gemm_nn(M, N, K, at.data(), B, C, accumulate);
}

} // namespace egogan
