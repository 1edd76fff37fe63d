#pragma once

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace fc2t2 {

// Splits [0, n) into `workers` contiguous ranges and runs fn(begin, end, worker)
// on each. The partition depends only on n and workers, so results that are
// written to disjoint locations are identical for any scheduling.
template <class Fn>
void parallel_for(long n, int workers, Fn&& fn) {
    workers = static_cast<int>(std::max<long>(1, std::min<long>(workers, n)));
    if (workers <= 1) {
        if (n > 0) fn(0L, n, 0);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (int t = 0; t < workers; ++t) {
        const long b = n * t / workers, e = n * (t + 1) / workers;
        pool.emplace_back([&, b, e, t] {
            try {
                fn(b, e, t);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& err : errors)
        if (err) std::rethrow_exception(err);
}

} // namespace fc2t2
