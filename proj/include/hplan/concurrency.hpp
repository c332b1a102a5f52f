// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace hplan
{

/// Runs fn(i) for i in [0, count) on up to `workers` threads.
/// fn must not throw; callers capture per-item failures themselves.
template <typename Fn>
void parallelFor(std::size_t count, int workers, Fn&& fn)
{
    auto const threads = static_cast<std::size_t>(std::max(1, workers));
    if (threads == 1 || count <= 1)
    {
        for (std::size_t i = 0; i < count; ++i)
            fn(i);
        return;
    }

    auto next = std::atomic<std::size_t> { 0 };
    auto pool = std::vector<std::jthread> {};
    pool.reserve(std::min(threads, count));
    for (std::size_t t = 0; t < std::min(threads, count); ++t)
    {
        pool.emplace_back([&] {
            for (auto i = next.fetch_add(1); i < count; i = next.fetch_add(1))
                fn(i);
        });
    }
}

/// Counting semaphore with a runtime limit.
class Semaphore
{
  public:
    explicit Semaphore(int limit): _available(std::max(1, limit)) {}

    void acquire()
    {
        auto lock = std::unique_lock { _mutex };
        _cv.wait(lock, [this] { return _available > 0; });
        --_available;
    }

    void release()
    {
        {
            auto lock = std::lock_guard { _mutex };
            ++_available;
        }
        _cv.notify_one();
    }

  private:
    std::mutex _mutex;
    std::condition_variable _cv;
    int _available;
};

class SemaphoreGuard
{
  public:
    explicit SemaphoreGuard(Semaphore& sem): _sem(sem) { _sem.acquire(); }
    ~SemaphoreGuard() { _sem.release(); }
    SemaphoreGuard(SemaphoreGuard const&) = delete;
    SemaphoreGuard& operator=(SemaphoreGuard const&) = delete;

  private:
    Semaphore& _sem;
};

} // namespace hplan
