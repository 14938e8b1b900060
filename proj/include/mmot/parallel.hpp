#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace mmot {

// Worker cap shared by all parallel loops; settable from the CLI (--threads)
// with MMOT_THREADS as fallback.
inline int& thread_cap() {
    static int cap = [] {
        if (const char* env = std::getenv("MMOT_THREADS")) {
            int v = std::atoi(env);
            if (v > 0) return v;
        }
        return 1;
    }();
    return cap;
}

inline void set_thread_cap(int n) { thread_cap() = std::max(1, n); }

// Chunked parallel map over [0, n). Chunk boundaries are fixed (independent of
// the worker count), and each chunk only writes its own outputs, so results
// are identical for any thread cap.
inline void parallel_chunks(int n, int chunk, const std::function<void(int, int, int)>& body) {
    if (n <= 0) return;
    chunk = std::max(1, chunk);
    const int n_chunks = (n + chunk - 1) / chunk;
    int workers = std::min(thread_cap(), n_chunks);
    if (workers <= 1) {
        for (int c = 0; c < n_chunks; ++c)
            body(c, c * chunk, std::min(n, (c + 1) * chunk));
        return;
    }
    std::atomic<int> next{0};
    auto run = [&] {
        while (true) {
            int c = next.fetch_add(1);
            if (c >= n_chunks) break;
            body(c, c * chunk, std::min(n, (c + 1) * chunk));
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers) - 1);
    for (int w = 1; w < workers; ++w) pool.emplace_back(run);
    run();
    for (auto& th : pool) th.join();
}

}  // namespace mmot
