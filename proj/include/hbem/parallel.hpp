#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace hbem {

inline unsigned hardware_workers()
{
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1u : n;
}

// Splits [0, n) into `threads` contiguous ranges and runs fn(begin, end) on
// each, the calling thread taking the first range.
template <class F>
void parallel_ranges(std::size_t n, unsigned threads, F&& fn)
{
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (threads == 1) {
        fn(std::size_t{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    const std::size_t base = n / threads, extra = n % threads;
    std::size_t begin = 0;
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    for (unsigned t = 0; t < threads; ++t) {
        const std::size_t len = base + (t < extra ? 1 : 0);
        ranges.emplace_back(begin, begin + len);
        begin += len;
    }
    for (unsigned t = 1; t < threads; ++t)
        pool.emplace_back([&, t] {
            try {
                fn(ranges[t].first, ranges[t].second);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    try {
        fn(ranges[0].first, ranges[0].second);
    } catch (...) {
        errors[0] = std::current_exception();
    }
    for (auto& th : pool)
        th.join();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

// Fixed-size pool with dynamic chunk scheduling. The calling thread joins in,
// so a pool of `workers` uses workers - 1 background threads. Calls must not
// be nested.
class WorkerPool {
public:
    explicit WorkerPool(unsigned workers)
    {
        workers = std::max(1u, workers);
        for (unsigned i = 1; i < workers; ++i)
            threads_.emplace_back([this] { worker_loop(); });
    }
    WorkerPool(const WorkerPool&) = delete;
    WorkerPool& operator=(const WorkerPool&) = delete;
    ~WorkerPool()
    {
        {
            std::lock_guard lk(m_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_)
            t.join();
    }

    unsigned size() const { return static_cast<unsigned>(threads_.size()) + 1; }

    // Runs fn(begin, end) over chunks of at most `grain` indices covering [0, n).
    void for_ranges(std::size_t n, std::size_t grain, const std::function<void(std::size_t, std::size_t)>& fn)
    {
        grain = std::max<std::size_t>(grain, 1);
        if (threads_.empty() || n <= grain) {
            for (std::size_t b = 0; b < n; b += grain)
                fn(b, std::min(n, b + grain));
            return;
        }
        {
            std::lock_guard lk(m_);
            job_ = &fn;
            n_ = n;
            grain_ = grain;
            next_.store(0);
            active_ = threads_.size();
            error_ = nullptr;
            ++generation_;
        }
        cv_.notify_all();
        run_chunks();
        std::unique_lock lk(m_);
        done_cv_.wait(lk, [&] { return active_ == 0; });
        job_ = nullptr;
        if (error_)
            std::rethrow_exception(error_);
    }

    void for_each(std::size_t n, const std::function<void(std::size_t)>& fn, std::size_t grain = 1)
    {
        for_ranges(n, grain, [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i)
                fn(i);
        });
    }

private:
    void run_chunks()
    {
        for (;;) {
            const std::size_t b = next_.fetch_add(grain_);
            if (b >= n_)
                break;
            try {
                (*job_)(b, std::min(n_, b + grain_));
            } catch (...) {
                std::lock_guard lk(m_);
                if (!error_)
                    error_ = std::current_exception();
            }
        }
    }

    void worker_loop()
    {
        std::uint64_t seen = 0;
        for (;;) {
            std::unique_lock lk(m_);
            cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
            if (stop_)
                return;
            seen = generation_;
            lk.unlock();
            run_chunks();
            lk.lock();
            if (--active_ == 0)
                done_cv_.notify_all();
        }
    }

    std::vector<std::thread> threads_;
    std::mutex m_;
    std::condition_variable cv_, done_cv_;
    std::uint64_t generation_ = 0;
    bool stop_ = false;
    const std::function<void(std::size_t, std::size_t)>* job_ = nullptr;
    std::size_t n_ = 0, grain_ = 1;
    std::atomic<std::size_t> next_{0};
    std::size_t active_ = 0;
    std::exception_ptr error_;
};

} // namespace hbem
