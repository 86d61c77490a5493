#include "enkf/scheduler.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <thread>

namespace enkf {
namespace {

std::vector<EvaluationTask> indexed_tasks(Index count, std::chrono::milliseconds delay = {}) {
  std::vector<EvaluationTask> tasks;
  for (Index i = 0; i < count; ++i)
    tasks.push_back([i, delay] {
      if (delay.count() > 0) std::this_thread::sleep_for(delay);
      return VectorXd::Constant(3, static_cast<double>(i));
    });
  return tasks;
}

TEST(Scheduler, ResultsInTaskOrder) {
  WorkerPool pool(8);
  const auto tasks = indexed_tasks(25);
  const auto out = schedule_particle_evaluations(tasks, pool);
  ASSERT_EQ(out.size(), 25u);
  for (Index i = 0; i < 25; ++i) EXPECT_EQ(out[static_cast<std::size_t>(i)](0), static_cast<double>(i));
}

TEST(Scheduler, SerialAndParallelAgree) {
  WorkerPool serial(1), parallel(8);
  EXPECT_EQ(serial.size(), 1u);
  const auto tasks = indexed_tasks(13);
  const auto a = schedule_particle_evaluations(tasks, serial);
  const auto b = schedule_particle_evaluations(tasks, parallel);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Scheduler, BudgetOverlapsBlockingTasks) {
  // 25 tasks of 20 ms: serial needs 500 ms, eight workers about 80 ms.
  WorkerPool pool(8);
  const auto tasks = indexed_tasks(25, std::chrono::milliseconds(20));
  const auto start = std::chrono::steady_clock::now();
  const auto out = schedule_particle_evaluations(tasks, pool);
  const auto elapsed = std::chrono::steady_clock::now() - start;
  EXPECT_EQ(out.size(), 25u);
  EXPECT_LT(elapsed, std::chrono::milliseconds(400));
}

TEST(Scheduler, LowestFailingIndexReported) {
  WorkerPool pool(4);
  std::vector<EvaluationTask> tasks = indexed_tasks(10);
  tasks[7] = [] () -> VectorXd { throw std::runtime_error("seven"); };
  tasks[3] = [] () -> VectorXd { throw std::runtime_error("three"); };
  try {
    schedule_particle_evaluations(tasks, pool);
    FAIL() << "expected an EvaluationError";
  } catch (const EvaluationError& e) {
    EXPECT_EQ(e.index(), 3);
    EXPECT_NE(std::string(e.what()).find("three"), std::string::npos);
  }
}

TEST(Scheduler, PoolIsReusable) {
  WorkerPool pool(3);
  for (int round = 0; round < 50; ++round) {
    const auto out = schedule_particle_evaluations(indexed_tasks(7), pool);
    EXPECT_EQ(out.back()(0), 6.0);
  }
}

TEST(Scheduler, EmptyRequest) {
  WorkerPool pool(2);
  EXPECT_TRUE(schedule_particle_evaluations({}, pool).empty());
}

}  // namespace
}  // namespace enkf
