#include "prism/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace prism {

int max_threads() {
    static int cached = [] {
        if (const char* env = std::getenv("PRISM_THREADS")) {
            int n = std::atoi(env);
            if (n >= 1) {
                return n;
            }
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }();
    return cached;
}

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
    if (n <= 0) {
        return;
    }
    int workers = static_cast<int>(std::min<int64_t>(max_threads(), n));
    if (workers <= 1) {
        for (int64_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }

    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(workers));
    int64_t chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        int64_t begin = w * chunk;
        int64_t end = std::min<int64_t>(begin + chunk, n);
        if (begin >= end) {
            break;
        }
        threads.emplace_back([&, begin, end] {
            try {
                for (int64_t i = begin; i < end; ++i) {
                    fn(i);
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) {
                    first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : threads) {
        t.join();
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
}

}  // namespace prism
