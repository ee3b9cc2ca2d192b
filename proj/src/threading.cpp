// SPDX-License-Identifier: Apache-2.0
#include "retr/util/threading.hpp"

#include <algorithm>
#include <atomic>
#include <vector>

namespace retr {

namespace {

std::atomic<int> g_threads{0};

int default_threads() {
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

}  // namespace

int thread_count() {
  int t = g_threads.load(std::memory_order_relaxed);
  return t > 0 ? t : default_threads();
}

void set_thread_count(int n) { g_threads.store(std::max(0, n)); }

void parallel_chunks(int64_t n, int chunks,
                     const std::function<void(int, int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  chunks = static_cast<int>(std::min<int64_t>(std::max(1, chunks), n));
  auto chunk_range = [&](int c, int64_t* b, int64_t* e) {
    *b = n * c / chunks;
    *e = n * (c + 1) / chunks;
  };
  int workers = std::min(thread_count(), chunks);
  if (workers <= 1) {
    for (int c = 0; c < chunks; ++c) {
      int64_t b, e;
      chunk_range(c, &b, &e);
      fn(c, b, e);
    }
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        int c = next.fetch_add(1);
        if (c >= chunks) return;
        int64_t b, e;
        chunk_range(c, &b, &e);
        fn(c, b, e);
      }
    });
  }
  for (auto& t : pool) t.join();
}

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
  int chunks = std::min<int64_t>(n, thread_count() * 4);
  parallel_chunks(n, chunks, [&](int, int64_t b, int64_t e) {
    for (int64_t i = b; i < e; ++i) fn(i);
  });
}

}  // namespace retr
