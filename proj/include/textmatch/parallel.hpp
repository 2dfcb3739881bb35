#pragma once

#include <functional>
#include <thread>
#include <vector>

namespace textmatch {

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks; every
// fn(i) must write only to its own slot so results are independent of the
// thread count. n_threads <= 0 means hardware concurrency.
inline void parallel_for(int n, int n_threads, const std::function<void(int)>& fn) {
    if (n <= 0) return;
    if (n_threads <= 0) n_threads = static_cast<int>(std::thread::hardware_concurrency());
    if (n_threads < 1) n_threads = 1;
    if (n_threads > n) n_threads = n;
    if (n_threads == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(n_threads);
    const int chunk = (n + n_threads - 1) / n_threads;
    for (int t = 0; t < n_threads; ++t) {
        const int lo = t * chunk;
        const int hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        workers.emplace_back([&fn, lo, hi]() {
            for (int i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& w : workers) w.join();
}

}  // namespace textmatch
