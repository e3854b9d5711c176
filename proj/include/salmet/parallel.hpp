#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "salmet/common.hpp"

namespace salmet {

inline int resolve_thread_count(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(0..n-1) across up to n_threads workers (0 = hardware count).
// Jobs must write only to their own output slots; byte-identical results then
// hold for any thread count. The first exception wins and is rethrown after
// all workers drain.
inline void parallel_for(int n, int n_threads, const std::function<void(int)>& fn) {
    require(n >= 0, "parallel_for: negative job count");
    const int workers = std::min(resolve_thread_count(n_threads), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }

    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr err;
    std::mutex err_mu;
    auto body = [&] {
        while (!failed.load(std::memory_order_relaxed)) {
            const int i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!err) err = std::current_exception();
                failed.store(true, std::memory_order_relaxed);
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) pool.emplace_back(body);
    for (std::thread& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace salmet
