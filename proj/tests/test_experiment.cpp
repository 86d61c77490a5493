#include "enkf/experiment.hpp"

#include <gtest/gtest.h>

#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace enkf {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class ExperimentDir : public ::testing::Test {
protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("enkf_exp_" + std::to_string(::getpid()) + "_" + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  ExperimentConfig small_quadratic(const std::string& sub) const {
    ExperimentConfig c = parse_config(R"({
      "seed": 3, "replicates": 3,
      "problem": {"kind": "quadratic", "rows": 12, "cols": 8, "seed": 2},
      "variants": ["vanilla", "kalman"],
      "optimizer": {"particle_count": 4, "sigma": 0.1, "iterations": 15}
    })");
    c.output_dir = (dir_ / sub).string();
    return c;
  }

  fs::path dir_;
};

RunTrace synthetic(const std::function<double(Index)>& dist, Index n) {
  RunTrace t;
  for (Index j = 0; j <= n; ++j) {
    TraceRecord r;
    r.iter = j;
    r.objective = dist(j);
    r.dist_to_opt = dist(j);
    r.fwd_evals = 5 * j;
    t.records.push_back(r);
  }
  return t;
}

TEST(Rate, RecoversKnownSlope) {
  // dist^2 = 1/j exactly.
  const RunTrace t = synthetic([](Index j) { return j == 0 ? 1.0 : 1.0 / std::sqrt(static_cast<double>(j)); }, 1000);
  const RateEstimate e = estimate_rate({t, t});
  EXPECT_NEAR(e.slope, -1.0, 1e-6);
  EXPECT_LT(e.half_width, 1e-6);
  EXPECT_EQ(e.first, 100);
  EXPECT_EQ(e.last, 1000);
  RateWindow w;
  w.first = 10;
  w.last = 50;
  const RateEstimate narrow = estimate_rate({t}, w);
  EXPECT_EQ(narrow.points, 41);
  EXPECT_NEAR(narrow.slope, -1.0, 1e-6);
}

TEST(Rate, ConstantTraceHasZeroSlope) {
  const RunTrace t = synthetic([](Index) { return 0.5; }, 200);
  EXPECT_NEAR(estimate_rate({t}).slope, 0.0, 1e-12);
}

TEST(Rate, Errors) {
  EXPECT_THROW(estimate_rate({}), ConfigError);
  RunTrace unknown = synthetic([](Index) { return 1.0; }, 10);
  for (auto& r : unknown.records) r.dist_to_opt = std::nan("");
  EXPECT_THROW(estimate_rate({unknown}), ConfigError);
  RateWindow bad;
  bad.burn_in = 1.0;
  EXPECT_THROW(estimate_rate({synthetic([](Index) { return 1.0; }, 10)}, bad), ConfigError);
}

TEST(Quantiles, MedianAndQuartiles) {
  EXPECT_EQ(quantile({3.0, 1.0, 2.0}, 0.5), 2.0);
  EXPECT_EQ(quantile({1.0, 2.0, 3.0, 4.0}, 0.5), 2.5);
  EXPECT_EQ(quantile({1.0, 2.0, 3.0, 4.0, 5.0}, 0.25), 2.0);
  const RunTrace a = synthetic([](Index) { return 1.0; }, 4);
  const RunTrace b = synthetic([](Index) { return 3.0; }, 4);
  const RunTrace c = synthetic([](Index) { return 2.0; }, 4);
  const Band band = column_band({a, b, c}, "iter", "objective");
  ASSERT_EQ(band.median.size(), 5u);
  EXPECT_EQ(band.median[2], 2.0);
  EXPECT_EQ(band.lower[2], 1.5);
  EXPECT_EQ(band.upper[2], 2.5);
  EXPECT_EQ(band.x[4], 4.0);
}

TEST(Compare, SetAgainstItselfHasNoDifference) {
  const RunTrace t = synthetic([](Index j) { return 1.0 / static_cast<double>(j + 1); }, 30);
  const std::vector<TraceSet> sets{{"a", {t, t}}, {"b", {t, t}}};
  const CompareReport rep = compare_report(sets);
  EXPECT_EQ(rep.reference, "a");
  EXPECT_EQ(rep.x_column, "fwd_evals");
  ASSERT_EQ(rep.rows.size(), 2u);
  EXPECT_EQ(rep.rows[1].objective_difference, 0.0);
  EXPECT_EQ(rep.rows[1].iterations_to_reference, 30);
  EXPECT_NE(rep.markdown.find("| b"), std::string::npos);
  EXPECT_EQ(compare_report(sets, "b").reference, "b");
  EXPECT_THROW(compare_report(sets, "c"), ConfigError);
  EXPECT_THROW(compare_report({sets[0]}), ConfigError);
}

TEST(Compare, SchemaMismatch) {
  RunTrace t = synthetic([](Index) { return 1.0; }, 3);
  RunTrace u = t;
  u.extra_columns = {"test_acc"};
  for (auto& r : u.records) r.extra = {0.5};
  EXPECT_THROW(compare_report({{"a", {t}}, {"b", {u}}}), ShapeError);
}

TEST_F(ExperimentDir, ZeroIterationsGivesOneRecord) {
  ExperimentConfig c = small_quadratic("zero");
  c.replicates = 1;
  c.variants = {"vanilla"};
  c.optimizer.iterations = 0;
  WorkerPool pool(1);
  const ExperimentResult r = run_experiment(c, pool);
  ASSERT_EQ(r.sets.size(), 1u);
  ASSERT_EQ(r.sets[0].trace_files.size(), 1u);
  const RunTrace t = read_trace_csv(r.sets[0].trace_files[0]);
  ASSERT_EQ(t.records.size(), 1u);
  EXPECT_EQ(t.records[0].iter, 0);
  EXPECT_EQ(t.records[0].fwd_evals, 0);
}

TEST_F(ExperimentDir, LayoutAndSidecars) {
  const ExperimentConfig c = small_quadratic("layout");
  WorkerPool pool(2);
  const ExperimentResult r = run_experiment(c, pool);
  EXPECT_FALSE(r.any_failure());
  ASSERT_EQ(r.sets.size(), 2u);
  EXPECT_EQ(r.sets[1].label, "kalman");
  for (const auto& s : r.sets) {
    ASSERT_EQ(s.trace_files.size(), 3u);
    for (const auto& f : s.trace_files) {
      EXPECT_EQ(read_trace_csv(f).records.size(), 16u);
      fs::path side = f;
      side.replace_extension(".json");
      const std::string text = slurp(side);
      EXPECT_NE(text.find("\"config_hash\""), std::string::npos);
      EXPECT_NE(text.find("\"seed\""), std::string::npos);
    }
  }
  const ExperimentResult back = load_manifest(c.output_dir);
  ASSERT_EQ(back.sets.size(), 2u);
  EXPECT_EQ(back.sets[0].trace_files, r.sets[0].trace_files);
  const auto sets = load_trace_sets(back);
  EXPECT_EQ(sets[1].traces.size(), 3u);
  EXPECT_NE(plot_data(sets).find("kalman"), std::string::npos);
  EXPECT_NE(pairing_table(back, sets).find("kalman"), std::string::npos);
}

TEST_F(ExperimentDir, ByteIdenticalAcrossRerunsAndWorkers) {
  ExperimentConfig a = small_quadratic("a");
  ExperimentConfig b = small_quadratic("b");
  WorkerPool one(1), four(4);
  const ExperimentResult ra = run_experiment(a, one);
  const ExperimentResult rb = run_experiment(b, four);
  const ExperimentResult ra2 = run_experiment(a, four);
  for (std::size_t s = 0; s < ra.sets.size(); ++s)
    for (std::size_t i = 0; i < ra.sets[s].trace_files.size(); ++i) {
      const std::string first = slurp(ra.sets[s].trace_files[i]);
      EXPECT_EQ(first, slurp(rb.sets[s].trace_files[i]));
      EXPECT_EQ(first, slurp(ra2.sets[s].trace_files[i]));
    }
  // Replicates differ from each other.
  EXPECT_NE(slurp(ra.sets[0].trace_files[0]), slurp(ra.sets[0].trace_files[1]));
}

TEST_F(ExperimentDir, FailingReplicatesAreIsolated) {
  ExperimentConfig c = small_quadratic("fail");
  c.variants = {"vanilla"};
  c.optimizer.step_rule.kind = StepRule::Kind::Theoretical;
  c.optimizer.step_rule.strong_convexity = 1e-300;
  WorkerPool pool(1);
  const ExperimentResult r = run_experiment(c, pool);
  ASSERT_EQ(r.sets.size(), 1u);
  EXPECT_TRUE(r.any_numeric_failure());
  // Every replicate was attempted and kept its trace prefix.
  EXPECT_EQ(r.sets[0].failures.size(), 3u);
  for (const auto& f : r.sets[0].trace_files) EXPECT_GE(read_trace_csv(f).records.size(), 1u);
  EXPECT_NE(r.sets[0].failures[2].find("replicate 2"), std::string::npos);
}

TEST_F(ExperimentDir, VariantRunsMergeIntoManifest) {
  const ExperimentConfig c = small_quadratic("merge");
  WorkerPool pool(1);
  RunOptions only_kalman;
  only_kalman.variant = "kalman";
  run_experiment(c, pool, only_kalman);
  RunOptions only_vanilla;
  only_vanilla.variant = "vanilla";
  run_experiment(c, pool, only_vanilla);
  const ExperimentResult m = load_manifest(c.output_dir);
  ASSERT_EQ(m.sets.size(), 2u);
  EXPECT_EQ(m.sets[0].label, "vanilla");
  EXPECT_EQ(m.sets[1].label, "kalman");
  RunOptions unknown;
  unknown.variant = "lbfgs";
  EXPECT_THROW(run_experiment(c, pool, unknown), ConfigError);
}

TEST_F(ExperimentDir, SweepLabelsEveryPoint) {
  ExperimentConfig c = small_quadratic("sweep");
  c.replicates = 1;
  c.optimizer.iterations = 3;
  c.optimizer.step_rule.kind = StepRule::Kind::Theoretical;
  c.sweep = {{"optimizer.particle_count", {2.0, 3.0}}};
  WorkerPool pool(1);
  RunOptions sweep;
  sweep.sweep = true;
  EXPECT_THROW(run_experiment(small_quadratic("nosweep"), pool, sweep), ConfigError);
  const ExperimentResult r = run_experiment(c, pool, sweep);
  ASSERT_EQ(r.sets.size(), 4u);
  EXPECT_EQ(r.sets[0].label, "vanilla__particle_count=2");
  EXPECT_EQ(r.sets[3].label, "kalman__particle_count=3");
  // k + 1 evaluations per iteration, no line search.
  EXPECT_EQ(read_trace_csv(r.sets[0].trace_files[0]).records.back().fwd_evals, 3 * 3);
  EXPECT_EQ(read_trace_csv(r.sets[2].trace_files[0]).records.back().fwd_evals, 3 * 4);
}

int cli(const std::string& args) {
  const int status = std::system((std::string(ENKF_CLI_PATH) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST_F(ExperimentDir, CliExitCodes) {
  const fs::path good = dir_ / "good.json";
  std::ofstream(good) << R"({"replicates": 2, "problem": {"kind": "quadratic", "rows": 10, "cols": 6},
    "optimizer": {"particle_count": 3, "iterations": 20}, "output": {"dir": ")"
                      << (dir_ / "good_out").string() << R"("}})";
  EXPECT_EQ(cli("run --config " + good.string()), 0);
  EXPECT_TRUE(fs::exists(dir_ / "good_out" / "manifest.json"));
  EXPECT_EQ(cli("rate --config " + good.string() + " --burn-in 0.2"), 0);
  EXPECT_EQ(cli("plot-data --out " + (dir_ / "good_out").string()), 0);
  // Compare needs two sets.
  EXPECT_EQ(cli("compare --out " + (dir_ / "good_out").string()), 2);

  const fs::path bad = dir_ / "bad.json";
  std::ofstream(bad) << R"({"optimizer": {"particle_count": 0}})";
  EXPECT_EQ(cli("run --config " + bad.string()), 2);
  EXPECT_EQ(cli("run --config " + (dir_ / "missing.json").string()), 2);
  EXPECT_EQ(cli("frobnicate"), 2);
  EXPECT_EQ(cli("rate --out " + (dir_ / "nothing_here").string()), 2);

  const fs::path diverging = dir_ / "diverging.json";
  std::ofstream(diverging) << R"({"problem": {"kind": "quadratic", "rows": 10, "cols": 6},
    "optimizer": {"particle_count": 3, "iterations": 20,
                  "step_rule": {"kind": "theoretical", "strong_convexity": 1e-300}},
    "output": {"dir": ")" << (dir_ / "div_out").string()
                           << R"("}})";
  EXPECT_EQ(cli("run --config " + diverging.string()), 3);
}

}  // namespace
}  // namespace enkf
