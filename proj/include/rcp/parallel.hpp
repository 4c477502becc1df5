#pragma once

#include <cstdlib>
#include <thread>
#include <vector>

namespace rcp {

/// Thread cap from the RCP_THREADS environment variable (0 or unset = auto).
inline int thread_limit() {
    static const int cached = [] {
        const char* env = std::getenv("RCP_THREADS");
        int n = env ? std::atoi(env) : 0;
        if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
        return n > 0 ? n : 1;
    }();
    return cached;
}

/// Runs fn(i) for i in [0, count). Each index is handled by exactly one
/// thread and writes only its own output slot, so results are identical
/// for any thread count.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
    const std::size_t threads =
        std::min<std::size_t>(static_cast<std::size_t>(thread_limit()), count);
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    const std::size_t chunk = (count + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
        const std::size_t begin = t * chunk;
        const std::size_t end = std::min(begin + chunk, count);
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end] {
            for (std::size_t i = begin; i < end; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace rcp
