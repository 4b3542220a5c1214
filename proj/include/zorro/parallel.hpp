#pragma once

#include <cstdlib>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace zorro {

inline size_t default_thread_count() {
    if (const char* env = std::getenv("ZORRO_THREADS")) {
        long v = std::atol(env);
        if (v > 0) return static_cast<size_t>(v);
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : hc;
}

// Runs fn(thread_index, begin, end) over a static partition of [0, n).
// Work items must be independent; the partition is deterministic but results
// must not depend on it.
inline void parallel_chunks(size_t threads, size_t n,
                            const std::function<void(size_t, size_t, size_t)>& fn) {
    if (n == 0) return;
    threads = std::max<size_t>(1, std::min(threads, n));
    if (threads == 1) {
        fn(0, 0, n);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (size_t t = 0; t < threads; ++t) {
        const size_t b = n * t / threads;
        const size_t e = n * (t + 1) / threads;
        pool.emplace_back([&, t, b, e] {
            try {
                fn(t, b, e);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& err : errors) {
        if (err) std::rethrow_exception(err);
    }
}

}  // namespace zorro
