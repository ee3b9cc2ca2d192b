// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <thread>

namespace retr {

/// Global worker-thread budget. Defaults to hardware concurrency; the CLI
/// sets it from --threads / RETR_THREADS. A value of 1 disables all internal
/// parallelism.
int thread_count();
void set_thread_count(int n);

/// Runs fn(chunk_index, begin, end) over [0, n) split into `chunks`
/// contiguous ranges. Chunk boundaries depend only on (n, chunks), never on
/// the thread budget, so any per-chunk accumulation reduced in chunk order
/// is bit-identical for every --threads setting.
void parallel_chunks(int64_t n, int chunks,
                     const std::function<void(int, int64_t, int64_t)>& fn);

/// Convenience: element-parallel loop with an implementation-chosen chunk
/// count. Only safe when fn writes disjoint outputs per index.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

}  // namespace retr
