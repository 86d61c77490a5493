#ifndef ENKF_SCHEDULER_HPP
#define ENKF_SCHEDULER_HPP

#include "enkf/common.hpp"

#include <condition_variable>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>

namespace enkf {

/// Fixed-size pool executing index-parallel loops. The calling thread takes
/// part in every loop, so a pool of size 1 runs serially without threads.
class WorkerPool {
public:
  explicit WorkerPool(std::size_t workers = default_workers());
  ~WorkerPool();

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  std::size_t size() const { return threads_.size() + 1; }

  /// Runs body(i) for i in [0, count). Exceptions are captured per index
  /// and returned in index order (null where the body succeeded).
  std::vector<std::exception_ptr> parallel_for(Index count, const std::function<void(Index)>& body);

  static std::size_t default_workers();

private:
  void worker_loop();
  void drain(std::unique_lock<std::mutex>& lock);

  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(Index)>* body_ = nullptr;
  std::vector<std::exception_ptr>* errors_ = nullptr;
  Index count_ = 0;
  Index next_ = 0;
  Index finished_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
};

/// A failed evaluation task; index is the task position in the request.
class EvaluationError : public NumericError {
public:
  EvaluationError(Index index, const std::string& what) : NumericError(what), index_(index) {}
  Index index() const { return index_; }

private:
  Index index_;
};

using EvaluationTask = std::function<VectorXd()>;

/// Runs the tasks on the pool; results come back in task order regardless
/// of the worker count. The first failing task (lowest index) aborts the
/// batch with an EvaluationError naming it.
std::vector<VectorXd> schedule_particle_evaluations(std::span<const EvaluationTask> tasks, WorkerPool& pool);

}  // namespace enkf

#endif  // ENKF_SCHEDULER_HPP
