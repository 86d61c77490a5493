#include "enkf/line_search.hpp"

#include <gtest/gtest.h>

namespace enkf {
namespace {

double parabola(const VectorXd& x) { return x.squaredNorm(); }

TEST(Armijo, AcceptsDescentOnParabola) {
  const VectorXd theta = VectorXd::Constant(1, 1.0);
  const VectorXd d = VectorXd::Constant(1, -2.0);
  const auto r = armijo_line_search(parabola, theta, d, 1.0, 1.0, {});
  EXPECT_FALSE(r.null_step);
  EXPECT_GT(r.step, 0.0);
  EXPECT_LT(r.value, 1.0);
  // mu = 1 lands on 1 again, mu = 0.5 hits the minimum.
  EXPECT_EQ(r.trials, 2);
  EXPECT_DOUBLE_EQ(r.step, 0.5);
  EXPECT_DOUBLE_EQ(r.value, 0.0);
}

TEST(Armijo, UphillGivesNullStepAfterMaxTrials) {
  const VectorXd theta = VectorXd::Constant(1, 1.0);
  const VectorXd d = VectorXd::Constant(1, 2.0);
  ArmijoParams params;
  const auto r = armijo_line_search(parabola, theta, d, 1.0, 1.0, params);
  EXPECT_TRUE(r.null_step);
  EXPECT_EQ(r.step, 0.0);
  EXPECT_EQ(r.value, 1.0);
  EXPECT_EQ(r.trials, params.max_trials);
}

TEST(Armijo, ZeroDirectionCostsNothing) {
  int calls = 0;
  auto phi = [&](const VectorXd& x) {
    ++calls;
    return parabola(x);
  };
  const auto r = armijo_line_search(phi, VectorXd::Ones(2), VectorXd::Zero(2), 2.0, 1.0, {});
  EXPECT_TRUE(r.null_step);
  EXPECT_EQ(calls, 0);
}

TEST(Armijo, SufficientDecreaseUsesDirectionNorm) {
  // (1 - 2 mu)^2 <= 1 - 0.9 * 4 mu holds for mu <= 0.1, so halving from 1
  // first qualifies at 1/16.
  ArmijoParams params;
  params.c = 0.9;
  const VectorXd theta = VectorXd::Constant(1, 1.0);
  const VectorXd d = VectorXd::Constant(1, -2.0);
  const auto r = armijo_line_search(parabola, theta, d, 1.0, 1.0, params);
  ASSERT_FALSE(r.null_step);
  EXPECT_DOUBLE_EQ(r.step, 1.0 / 16.0);
  EXPECT_EQ(r.trials, 5);
}

TEST(Armijo, NonFiniteProbeIsNumericError) {
  auto phi = [](const VectorXd&) { return std::numeric_limits<double>::quiet_NaN(); };
  EXPECT_THROW(armijo_line_search(phi, VectorXd::Ones(1), VectorXd::Ones(1), 1.0, 1.0, {}), NumericError);
}

TEST(Armijo, InvalidParameters) {
  ArmijoParams p;
  p.shrink = 1.0;
  EXPECT_THROW(armijo_line_search(parabola, VectorXd::Ones(1), VectorXd::Ones(1), 1.0, 1.0, p), ConfigError);
  EXPECT_THROW(armijo_line_search(parabola, VectorXd::Ones(1), VectorXd::Ones(1), 1.0, 0.0, {}), ConfigError);
}

}  // namespace
}  // namespace enkf
