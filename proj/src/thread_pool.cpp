#include "voxseg/thread_pool.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace voxseg {

namespace {
// The layers allocate and free multi-megabyte activation tensors every step;
// keeping those blocks on the heap instead of returning them to the kernel
// avoids an mmap/fault/munmap cycle per tensor.
struct MallocTuning {
    MallocTuning() {
#if defined(__GLIBC__)
        mallopt(M_MMAP_MAX, 0);
        mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
    }
};
const MallocTuning g_malloc_tuning;
} // namespace

ThreadPool& ThreadPool::instance() {
    static ThreadPool pool([] {
        if (const char* env = std::getenv("VOXSEG_THREADS")) {
            int n = std::atoi(env);
            if (n >= 1) return n;
        }
        unsigned hc = std::thread::hardware_concurrency();
        return hc == 0 ? 1 : static_cast<int>(hc);
    }());
    return pool;
}

ThreadPool::ThreadPool(int threads) { spawn(threads); }

ThreadPool::~ThreadPool() { join_all(); }

void ThreadPool::spawn(int threads) {
    if (threads < 1) threads = 1;
    stop_ = false;
    for (int i = 0; i < threads - 1; ++i)
        workers_.emplace_back([this] { worker_loop(); });
}

void ThreadPool::join_all() {
    {
        std::unique_lock<std::mutex> lk(mu_);
        stop_ = true;
        cv_task_.notify_all();
    }
    for (auto& t : workers_) t.join();
    workers_.clear();
}

void ThreadPool::resize(int threads) {
    join_all();
    spawn(threads);
}

namespace {
thread_local bool t_in_worker = false;
}

void ThreadPool::worker_loop() {
    t_in_worker = true;
    uint64_t seen = 0;
    for (;;) {
        Task* task = nullptr;
        {
            std::unique_lock<std::mutex> lk(mu_);
            cv_task_.wait(lk, [&] { return stop_ || (task_ != nullptr && generation_ != seen); });
            if (stop_) return;
            seen = generation_;
            task = task_;
        }
        for (;;) {
            int64_t begin = task->next.fetch_add(task->chunk);
            if (begin >= task->n) break;
            int64_t end = begin + task->chunk;
            if (end > task->n) end = task->n;
            (*task->fn)(begin, end);
        }
        if (task->remaining.fetch_sub(1) == 1) {
            std::unique_lock<std::mutex> lk(mu_);
            cv_done_.notify_all();
        }
    }
}

void ThreadPool::parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    int nthreads = thread_count();
    if (nthreads == 1 || n == 1 || t_in_worker) {
        fn(0, n);
        return;
    }
    std::unique_lock<std::mutex> submit(submit_mu_);
    Task task;
    task.fn = &fn;
    task.n = n;
    // ~4 chunks per worker for load balance without excessive contention
    task.chunk = n / (4 * nthreads);
    if (task.chunk < 1) task.chunk = 1;
    task.remaining.store(nthreads - 1);
    {
        std::unique_lock<std::mutex> lk(mu_);
        task_ = &task;
        ++generation_;
        cv_task_.notify_all();
    }
    // The calling thread works too.
    for (;;) {
        int64_t begin = task.next.fetch_add(task.chunk);
        if (begin >= task.n) break;
        int64_t end = begin + task.chunk;
        if (end > task.n) end = task.n;
        fn(begin, end);
    }
    {
        std::unique_lock<std::mutex> lk(mu_);
        cv_done_.wait(lk, [&] { return task.remaining.load() == 0; });
        task_ = nullptr;
    }
}

} // namespace voxseg
