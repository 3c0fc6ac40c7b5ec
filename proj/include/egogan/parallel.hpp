#pragma once

#include <omp.h>

#include "egogan/common.hpp"

namespace egogan {

// Static partition of [0, n) across the OpenMP team. Each index is written by
// exactly one thread, so results are bitwise independent of the thread count.
template <class F>
void parallel_for(i64 n, F&& body) {
    if (n <= 0) return;
    if (n < 4) { // not worth a team
        body(0, n);
        return;
    }
#pragma omp parallel
    {
        const i64 nt = omp_get_num_threads();
        const i64 id = omp_get_thread_num();
        const i64 chunk = (n + nt - 1) / nt;
        const i64 lo = id * chunk;
        const i64 hi = lo + chunk < n ? lo + chunk : n;
        if (lo < hi) body(lo, hi);
    }
}

} // namespace egogan
