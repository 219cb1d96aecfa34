#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace simprob {

// Calls fn(i) for i in [0, n) using up to `threads` workers over contiguous
// static chunks. Work items must write only to their own slot, which makes
// results independent of the thread count. The exception from the lowest
// failing chunk is rethrown.
template<class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn && fn)
{
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            const std::size_t begin = w * chunk;
            const std::size_t end = std::min(n, begin + chunk);
            try {
                for (std::size_t i = begin; i < end; ++i) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto & t : pool) t.join();
    for (auto & e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

} // namespace simprob
