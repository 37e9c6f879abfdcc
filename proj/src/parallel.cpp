#include "iet/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace iet {

namespace {

int initial_thread_count() {
  if (const char* env = std::getenv("IEA_THREADS")) {
    int v = std::atoi(env);
    return v < 0 ? 0 : v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::min(hw == 0 ? 1u : hw, 8u));
}

std::atomic<int> g_threads{-1};

int threads_now() {
  int v = g_threads.load(std::memory_order_relaxed);
  if (v < 0) {
    v = initial_thread_count();
    g_threads.store(v, std::memory_order_relaxed);
  }
  return v;
}

thread_local bool tl_inside_parallel = false;

// Minimal persistent pool. Workers grab contiguous chunks of the active
// range; one job runs at a time (run_mu_).
class Pool {
 public:
  explicit Pool(int workers) {
    for (int i = 0; i < workers; ++i) {
      threads_.emplace_back([this] { worker_loop(); });
    }
  }

  ~Pool() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  // Returns false if the pool is busy; caller should fall back to sequential.
  bool try_run(int64_t n, int64_t chunk,
               const std::function<void(int64_t, int64_t)>& fn) {
    std::unique_lock<std::mutex> run_lk(run_mu_, std::try_to_lock);
    if (!run_lk.owns_lock()) return false;
    {
      std::lock_guard<std::mutex> lk(mu_);
      fn_ = &fn;
      total_ = n;
      chunk_ = chunk;
      next_.store(0, std::memory_order_relaxed);
      pending_ = static_cast<int>(threads_.size());
      ++generation_;
    }
    cv_.notify_all();
    drain();  // calling thread participates
    std::unique_lock<std::mutex> lk(mu_);
    done_cv_.wait(lk, [this] { return pending_ == 0; });
    fn_ = nullptr;
    return true;
  }

 private:
  void drain() {
    for (;;) {
      int64_t begin = next_.fetch_add(chunk_, std::memory_order_relaxed);
      if (begin >= total_) break;
      (*fn_)(begin, std::min(begin + chunk_, total_));
    }
  }

  void worker_loop() {
    tl_inside_parallel = true;  // nested parallel_for inside a worker stays sequential
    uint64_t seen = 0;
    for (;;) {
      std::unique_lock<std::mutex> lk(mu_);
      cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      lk.unlock();
      drain();
      lk.lock();
      if (--pending_ == 0) done_cv_.notify_all();
    }
  }

  std::vector<std::thread> threads_;
  std::mutex run_mu_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  const std::function<void(int64_t, int64_t)>* fn_ = nullptr;
  std::atomic<int64_t> next_{0};
  int64_t total_ = 0;
  int64_t chunk_ = 1;
  uint64_t generation_ = 0;
  int pending_ = 0;
  bool stop_ = false;
};

Pool* shared_pool(int workers) {
  static std::mutex mu;
  static Pool* pool = nullptr;
  static int pool_size = 0;
  std::lock_guard<std::mutex> lk(mu);
  if (pool == nullptr || pool_size < workers) {
    if (pool == nullptr) {  // never shrink or rebuild a live pool
      pool = new Pool(workers);
      pool_size = workers;
    }
  }
  return pool;
}

}  // namespace

int thread_count() { return threads_now(); }

void set_thread_count(int n) {
  g_threads.store(n < 0 ? 0 : n, std::memory_order_relaxed);
}

void parallel_for_ranges(int64_t n,
                         const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  int workers = threads_now();
  if (workers <= 1 || n == 1 || tl_inside_parallel) {
    fn(0, n);
    return;
  }
  int64_t chunk = std::max<int64_t>(1, n / (static_cast<int64_t>(workers) * 4));
  bool was_inside = tl_inside_parallel;
  tl_inside_parallel = true;
  bool ran = shared_pool(workers - 1)->try_run(n, chunk, fn);
  tl_inside_parallel = was_inside;
  if (!ran) fn(0, n);
}

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
  parallel_for_ranges(n, [&fn](int64_t b, int64_t e) {
    for (int64_t i = b; i < e; ++i) fn(i);
  });
}

}  // namespace iet
