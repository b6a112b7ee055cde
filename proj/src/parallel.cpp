#include "ppseg/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace ppseg {
namespace {

int default_budget() {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    if (const char* env = std::getenv("PPSEG_THREADS")) {
        const int cap = std::atoi(env);
        if (cap >= 1) n = std::min(n, cap);
    }
    return n;
}

std::atomic<int> g_budget{0};

} // namespace

int thread_budget() {
    int n = g_budget.load(std::memory_order_relaxed);
    if (n < 1) {
        n = default_budget();
        g_budget.store(n, std::memory_order_relaxed);
    }
    return n;
}

void set_thread_budget(int n) {
    g_budget.store(n < 1 ? default_budget() : n, std::memory_order_relaxed);
}

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn,
                  int64_t grain) {
    if (n <= 0) return;
    const int budget = thread_budget();
    const int64_t max_chunks = std::max<int64_t>(1, n / std::max<int64_t>(grain, 1));
    const int workers = static_cast<int>(std::min<int64_t>(budget, max_chunks));
    if (workers <= 1) {
        fn(0, n);
        return;
    }
    const int64_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(workers));
    for (int t = 0; t < workers; ++t) {
        const int64_t begin = t * chunk;
        const int64_t end = std::min<int64_t>(begin + chunk, n);
        if (begin >= end) break;
        threads.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    for (auto& th : threads) th.join();
}

} // namespace ppseg
