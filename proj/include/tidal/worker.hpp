#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <exception>
#include <functional>
#include <future>
#include <mutex>
#include <thread>
#include <utility>

namespace tidal {

// Single background thread fed by a bounded FIFO. submit() blocks while the
// queue is full; drain() waits until every submitted task has finished.
class Worker {
 public:
  explicit Worker(std::size_t queue_limit = 8) : limit_(queue_limit == 0 ? 1 : queue_limit) {
    thread_ = std::thread([this] { loop(); });
  }

  Worker(const Worker&) = delete;
  Worker& operator=(const Worker&) = delete;

  ~Worker() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    thread_.join();
  }

  template <typename F>
  std::future<void> submit(F&& fn) {
    auto task = std::make_shared<std::packaged_task<void()>>(std::forward<F>(fn));
    std::future<void> fut = task->get_future();
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return queue_.size() < limit_; });
      queue_.emplace_back([task] { (*task)(); });
      ++outstanding_;
    }
    cv_.notify_all();
    return fut;
  }

  void drain() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return outstanding_ == 0; });
  }

 private:
  void loop() {
    for (;;) {
      std::function<void()> job;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stop_ || !queue_.empty(); });
        if (queue_.empty()) return;
        job = std::move(queue_.front());
        queue_.pop_front();
      }
      cv_.notify_all();
      job();
      {
        std::lock_guard lock(mu_);
        --outstanding_;
      }
      cv_.notify_all();
    }
  }

  std::size_t limit_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> queue_;
  std::size_t outstanding_ = 0;
  bool stop_ = false;
  std::thread thread_;
};

}  // namespace tidal
