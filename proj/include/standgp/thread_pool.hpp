#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace standgp {

/// Runs fn(0..n-1) across up to `jobs` threads. Work items claim indices from
/// a shared counter, so results must be written into per-index slots; outputs
/// are then identical to the serial order regardless of thread count.
inline void parallel_for(long n, int jobs, const std::function<void(long)>& fn) {
    if (n <= 0) return;
    const int workers = static_cast<int>(std::min<long>(std::max(jobs, 1), n));
    if (workers <= 1) {
        for (long i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<long> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) {
        threads.emplace_back([&] {
            while (!failed.load(std::memory_order_relaxed)) {
                const long i = next.fetch_add(1, std::memory_order_relaxed);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    failed.store(true, std::memory_order_relaxed);
                    return;
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace standgp
