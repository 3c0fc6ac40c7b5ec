#include <malloc.h>

// Large conv scratch buffers are allocated and freed every layer call; keep
// them inside the arena instead of handing pages back to the kernel.
namespace {
struct MallocTuning {
    MallocTuning() {
        mallopt(M_MMAP_THRESHOLD, 256 << 20);
        mallopt(M_TRIM_THRESHOLD, 256 << 20);
    }
} tuning;
} // namespace
