#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace mwdha {

// Worker count: MWDHA_THREADS if set, else hardware concurrency.
inline int thread_count() {
    if (const char* s = std::getenv("MWDHA_THREADS")) {
        int t = std::atoi(s);
        if (t >= 1) return t;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// f(i) for i in [0, n), contiguous blocks per worker.
template <class F>
void parallel_for(long long n, F&& f) {
    const int t = static_cast<int>(std::min<long long>(thread_count(), n));
    if (t <= 1) {
        for (long long i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errs(t);
    const long long chunk = (n + t - 1) / t;
    for (int w = 0; w < t; ++w) {
        long long lo = w * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, w, &f, &errs] {
            try {
                for (long long i = lo; i < hi; ++i) f(i);
            } catch (...) {
                errs[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errs)
        if (e) std::rethrow_exception(e);
}

}  // namespace mwdha
