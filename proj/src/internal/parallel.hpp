#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace fipa::detail {

// Run fn(job) for job in [0, n_jobs) on up to `threads` workers pulling from
// a shared counter. With threads <= 1 the loop runs inline. The first
// exception thrown by any worker is rethrown on the calling thread.
template <class Fn>
void parallel_for(std::size_t n_jobs, int threads, Fn&& fn) {
    if (threads <= 1 || n_jobs <= 1) {
        for (std::size_t job = 0; job < n_jobs; ++job) fn(job);
        return;
    }

    const std::size_t n_workers =
        std::min<std::size_t>(static_cast<std::size_t>(threads), n_jobs);
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};

    auto work = [&] {
        for (;;) {
            const std::size_t job = next.fetch_add(1, std::memory_order_relaxed);
            if (job >= n_jobs || failed.load(std::memory_order_relaxed)) return;
            try {
                fn(job);
            } catch (...) {
                if (!failed.exchange(true)) error = std::current_exception();
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(n_workers - 1);
    for (std::size_t t = 1; t < n_workers; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (failed.load()) std::rethrow_exception(error);
}

}  // namespace fipa::detail
