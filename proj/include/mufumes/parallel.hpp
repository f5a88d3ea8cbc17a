#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace mufumes {

/// Worker count from MUFUMES_WORKERS, else hardware concurrency; always >= 1.
[[nodiscard]] inline int default_workers() {
    if (const char* env = std::getenv("MUFUMES_WORKERS")) {
        try {
            const int v = std::stoi(env);
            if (v >= 1) return v;
        } catch (const std::exception&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/**
 * Runs fn(0..tasks-1) on up to `workers` threads. Tasks are independent and
 * must write only to their own output slot; the first exception thrown by any
 * task is rethrown after all threads join.
 */
template <class Fn>
void parallel_for(std::size_t tasks, int workers, Fn&& fn) {
    if (tasks == 0) return;
    const auto n_threads = static_cast<std::size_t>(std::clamp<long long>(workers, 1, static_cast<long long>(tasks)));
    if (n_threads == 1) {
        for (std::size_t t = 0; t < tasks; ++t) fn(t);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (std::size_t w = 0; w < n_threads; ++w) {
        pool.emplace_back([&] {
            for (std::size_t t = next++; t < tasks; t = next++) {
                if (failed.load()) return;
                try {
                    fn(t);
                } catch (...) {
                    if (!failed.exchange(true)) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace mufumes
