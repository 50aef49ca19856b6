#ifndef LEXINF_PARALLEL_HPP
#define LEXINF_PARALLEL_HPP

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace lexinf {

/// Run fn(i) for i in [0, n) on up to `workers` threads. Each index is
/// processed exactly once; callers write results into per-index slots so
/// output never depends on scheduling. The first exception is rethrown.
template <class Fn>
void parallel_for(int n, int workers, Fn&& fn)
{
    if (n <= 0)
        return;
    if (workers <= 1 || n == 1) {
        for (int i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto body = [&] {
        for (;;) {
            int i = next.fetch_add(1);
            if (i >= n)
                return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure)
                    failure = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    int count = workers < n ? workers : n;
    pool.reserve(count);
    for (int w = 0; w < count; ++w)
        pool.emplace_back(body);
    for (auto& th : pool)
        th.join();
    if (failure)
        std::rethrow_exception(failure);
}

} // namespace lexinf

#endif // LEXINF_PARALLEL_HPP
