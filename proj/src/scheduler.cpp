#include "enkf/scheduler.hpp"

#include <string>

namespace enkf {

std::size_t WorkerPool::default_workers() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

WorkerPool::WorkerPool(std::size_t workers) {
  if (workers < 1) throw ConfigError("worker budget must be at least 1");
  threads_.reserve(workers - 1);
  for (std::size_t i = 1; i < workers; ++i) threads_.emplace_back([this] { worker_loop(); });
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  wake_.notify_all();
  for (auto& t : threads_) t.join();
}

void WorkerPool::drain(std::unique_lock<std::mutex>& lock) {
  while (next_ < count_) {
    const Index i = next_++;
    const auto* body = body_;
    auto* errors = errors_;
    lock.unlock();
    try {
      (*body)(i);
    } catch (...) {
      (*errors)[static_cast<std::size_t>(i)] = std::current_exception();
    }
    lock.lock();
    if (++finished_ == count_) done_.notify_all();
  }
}

void WorkerPool::worker_loop() {
  std::uint64_t seen = 0;
  std::unique_lock lock(mutex_);
  for (;;) {
    wake_.wait(lock, [&] { return stop_ || generation_ != seen; });
    if (stop_) return;
    seen = generation_;
    drain(lock);
  }
}

std::vector<std::exception_ptr> WorkerPool::parallel_for(Index count, const std::function<void(Index)>& body) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(std::max<Index>(count, 0)));
  if (count <= 0) return errors;
  if (threads_.empty()) {
    for (Index i = 0; i < count; ++i) {
      try {
        body(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
    return errors;
  }
  std::unique_lock lock(mutex_);
  body_ = &body;
  errors_ = &errors;
  count_ = count;
  next_ = 0;
  finished_ = 0;
  ++generation_;
  wake_.notify_all();
  drain(lock);
  done_.wait(lock, [&] { return finished_ == count_; });
  body_ = nullptr;
  errors_ = nullptr;
  count_ = 0;
  next_ = 0;
  return errors;
}

std::vector<VectorXd> schedule_particle_evaluations(std::span<const EvaluationTask> tasks, WorkerPool& pool) {
  std::vector<VectorXd> results(tasks.size());
  const auto errors = pool.parallel_for(static_cast<Index>(tasks.size()), [&](Index i) {
    results[static_cast<std::size_t>(i)] = tasks[static_cast<std::size_t>(i)]();
  });
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i]) continue;
    std::string what = "unknown error";
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    throw EvaluationError(static_cast<Index>(i), "evaluation task " + std::to_string(i) + " failed: " + what);
  }
  return results;
}

}  // namespace enkf
