#include "convexdp/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace cdp {

namespace {

std::atomic<std::size_t> g_threads{0};

std::size_t env_threads() {
    const char* raw = std::getenv("STOCH_BELLMAN_THREADS");
    if (!raw) return 0;
    try {
        long v = std::stol(raw);
        return v > 0 ? static_cast<std::size_t>(v) : 0;
    } catch (...) {
        return 0;
    }
}

}  // namespace

std::size_t thread_count() {
    if (auto n = g_threads.load()) return n;
    if (auto n = env_threads()) return n;
    auto hw = std::thread::hardware_concurrency();
    return hw ? hw : 1;
}

void set_thread_count(std::size_t n) { g_threads.store(n); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    std::size_t workers = std::min(thread_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace cdp
