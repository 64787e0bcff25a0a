#pragma once

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace lyra {

// Worker cap: LYRA_THREADS env var, else hardware concurrency.
inline int max_threads() {
    static const int cached = [] {
        if (const char* env = std::getenv("LYRA_THREADS")) {
            const int v = std::atoi(env);
            if (v >= 1) return v;
        }
        const unsigned hw = std::thread::hardware_concurrency();
        return hw ? int(hw) : 1;
    }();
    return cached;
}

// Splits [0, n) into contiguous chunks and runs fn(begin, end) on each.
// Serial below `grain` so small training-scale kernels skip thread spawn.
// Chunking never changes per-element arithmetic, so results are identical
// whatever the worker count.
template <class F>
void parallel_for(std::size_t n, std::size_t grain, F&& fn) {
    if (n == 0) return;
    const std::size_t workers = std::min<std::size_t>(
        std::size_t(max_threads()), grain ? std::max<std::size_t>(1, n / grain) : 1);
    if (workers <= 1) {
        fn(std::size_t(0), n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 1; w < workers; ++w) {
        const std::size_t b = std::min(n, w * chunk);
        const std::size_t e = std::min(n, b + chunk);
        if (b < e) pool.emplace_back([&fn, b, e] { fn(b, e); });
    }
    fn(std::size_t(0), std::min(n, chunk));
    for (auto& t : pool) t.join();
}

}  // namespace lyra
