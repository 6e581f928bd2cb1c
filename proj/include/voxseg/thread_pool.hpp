#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace voxseg {

// Persistent worker pool for data-parallel loops. Every kernel partitioned
// through parallel_for writes each output element from exactly one worker
// with a fixed internal accumulation order, so results are bitwise identical
// for any thread count.
class ThreadPool {
public:
    // Reads VOXSEG_THREADS, else hardware concurrency.
    static ThreadPool& instance();

    explicit ThreadPool(int threads);
    ~ThreadPool();

    ThreadPool(const ThreadPool&) = delete;
    ThreadPool& operator=(const ThreadPool&) = delete;

    int thread_count() const { return static_cast<int>(workers_.size()) + 1; }

    // Overrides the pool size (used by determinism tests). Joins and respawns.
    void resize(int threads);

    // fn(begin, end) over [0, n) split into contiguous chunks; blocks until done.
    void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

private:
    void worker_loop();
    void spawn(int threads);
    void join_all();

    struct Task {
        const std::function<void(int64_t, int64_t)>* fn = nullptr;
        int64_t n = 0;
        int64_t chunk = 0;
        std::atomic<int64_t> next{0};
        std::atomic<int> remaining{0};
    };

    std::vector<std::thread> workers_;
    std::mutex submit_mu_; // one parallel_for at a time; nested calls run inline
    std::mutex mu_;
    std::condition_variable cv_task_;
    std::condition_variable cv_done_;
    Task* task_ = nullptr;
    uint64_t generation_ = 0;
    bool stop_ = false;
};

} // namespace voxseg
