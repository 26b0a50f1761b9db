#pragma once

#include <malloc.h>

#include <mutex>

namespace ropnet::core {

// Tape passes allocate and free many multi-megabyte tensors. With glibc's
// default mmap threshold each of those is a fresh mmap/munmap, so every
// sample re-faults hundreds of megabytes. Raising the thresholds keeps the
// blocks on the heap free lists, where they are reused warm.
inline void tune_allocator_for_tensors() {
    static std::once_flag once;
    std::call_once(once, [] {
        mallopt(M_MMAP_THRESHOLD, 1 << 30);
        mallopt(M_TRIM_THRESHOLD, 256 << 20);
    });
}

}  // namespace ropnet::core
