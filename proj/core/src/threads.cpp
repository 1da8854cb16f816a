#include "pirsurf/threads.hpp"

#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace pirsurf {

int thread_count() {
  static int cached = [] {
    if (const char* env = std::getenv("PIRSURF_THREADS")) {
      int n = std::atoi(env);
      if (n >= 1) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
  }();
  return cached;
}

namespace {

class Pool {
 public:
  explicit Pool(int workers) : workers_(workers) {
    for (int w = 1; w < workers_; ++w) {
      threads_.emplace_back([this, w] { worker_loop(w); });
    }
  }

  ~Pool() {
    {
      std::unique_lock lk(mu_);
      stop_ = true;
      ++generation_;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void run(std::int64_t n, const std::function<void(std::int64_t, std::int64_t, int)>& fn) {
    if (n <= 0) return;
    {
      std::unique_lock lk(mu_);
      n_ = n;
      fn_ = &fn;
      pending_ = workers_ - 1;
      ++generation_;
    }
    cv_.notify_all();
    run_chunk(0);
    std::unique_lock lk(mu_);
    done_cv_.wait(lk, [this] { return pending_ == 0; });
    fn_ = nullptr;
  }

  int workers() const { return workers_; }

 private:
  void run_chunk(int w) {
    std::int64_t begin = n_ * w / workers_;
    std::int64_t end = n_ * (w + 1) / workers_;
    if (begin < end) (*fn_)(begin, end, w);
  }

  void worker_loop(int w) {
    std::uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [&] { return generation_ != seen; });
        seen = generation_;
        if (stop_) return;
      }
      run_chunk(w);
      {
        std::unique_lock lk(mu_);
        if (--pending_ == 0) done_cv_.notify_one();
      }
    }
  }

  int workers_;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  std::uint64_t generation_ = 0;
  int pending_ = 0;
  bool stop_ = false;
  std::int64_t n_ = 0;
  const std::function<void(std::int64_t, std::int64_t, int)>* fn_ = nullptr;
};

Pool& pool() {
  static Pool p(thread_count());
  return p;
}

}  // namespace

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t, int)>& fn) {
  if (n <= 0) return;
  if (thread_count() == 1) {
    fn(0, n, 0);
    return;
  }
  pool().run(n, fn);
}

}  // namespace pirsurf
