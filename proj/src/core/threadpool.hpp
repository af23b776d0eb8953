#pragma once

#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace stnet {

// Persistent worker pool with static index partitioning. Every index is
// processed by exactly one worker in a fixed order, so results are bitwise
// independent of the thread count.
class ThreadPool {
 public:
  static ThreadPool& instance() {
    static ThreadPool pool;
    return pool;
  }

  int size() const { return static_cast<int>(workers_.size()) + 1; }

  // fn(begin, end) over [0, n), called once per contiguous chunk.
  void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    int nthreads = size();
    if (nthreads == 1 || n == 1) {
      fn(0, n);
      return;
    }
    int chunks = static_cast<int>(std::min<int64_t>(nthreads, n));
    int64_t per = (n + chunks - 1) / chunks;
    {
      std::unique_lock<std::mutex> lk(mu_);
      job_ = &fn;
      job_n_ = n;
      job_per_ = per;
      job_chunks_ = chunks;
      next_chunk_ = 1;  // chunk 0 runs on the calling thread
      done_chunks_ = 0;
      ++generation_;
    }
    cv_.notify_all();
    fn(0, std::min<int64_t>(per, n));
    {
      std::unique_lock<std::mutex> lk(mu_);
      ++done_chunks_;
      // help with remaining chunks
      while (next_chunk_ < job_chunks_) {
        int c = next_chunk_++;
        lk.unlock();
        int64_t b = static_cast<int64_t>(c) * job_per_;
        fn(b, std::min<int64_t>(b + job_per_, job_n_));
        lk.lock();
        ++done_chunks_;
      }
      cv_done_.wait(lk, [&] { return done_chunks_ == job_chunks_; });
      job_ = nullptr;
    }
  }

  ~ThreadPool() {
    {
      std::unique_lock<std::mutex> lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : workers_) t.join();
  }

 private:
  ThreadPool() {
    int n = 0;
    if (const char* env = std::getenv("STNET_THREADS")) n = std::atoi(env);
    if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
    for (int i = 0; i < n - 1; ++i) workers_.emplace_back([this] { worker_loop(); });
  }

  void worker_loop() {
    uint64_t seen = 0;
    for (;;) {
      std::unique_lock<std::mutex> lk(mu_);
      cv_.wait(lk, [&] { return stop_ || (job_ && generation_ != seen && next_chunk_ < job_chunks_); });
      if (stop_) return;
      seen = generation_;
      while (job_ && next_chunk_ < job_chunks_) {
        int c = next_chunk_++;
        const auto* fn = job_;
        int64_t per = job_per_, n = job_n_;
        lk.unlock();
        int64_t b = static_cast<int64_t>(c) * per;
        (*fn)(b, std::min<int64_t>(b + per, n));
        lk.lock();
        if (++done_chunks_ == job_chunks_) cv_done_.notify_all();
      }
    }
  }

  std::vector<std::thread> workers_;
  std::mutex mu_;
  std::condition_variable cv_, cv_done_;
  const std::function<void(int64_t, int64_t)>* job_ = nullptr;
  int64_t job_n_ = 0, job_per_ = 0;
  int job_chunks_ = 0, next_chunk_ = 0, done_chunks_ = 0;
  uint64_t generation_ = 0;
  bool stop_ = false;
};

// Parallelize only when the work amortizes the synchronization cost.
inline void maybe_parallel_for(int64_t n, int64_t cost_per_item,
                               const std::function<void(int64_t, int64_t)>& fn) {
  if (n * cost_per_item < (1 << 18)) {
    fn(0, n);
  } else {
    ThreadPool::instance().parallel_for(n, fn);
  }
}

}  // namespace stnet
