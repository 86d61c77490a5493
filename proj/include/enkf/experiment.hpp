#ifndef ENKF_EXPERIMENT_HPP
#define ENKF_EXPERIMENT_HPP

#include "enkf/config.hpp"
#include "enkf/scheduler.hpp"
#include "enkf/trace.hpp"

#include <optional>
#include <string>

namespace enkf {

/// Replicates of one (variant, sweep point) pair.
struct RunSet {
  std::string label;
  std::string variant;
  /// Sweep label, empty without a sweep.
  std::string point;
  std::vector<std::string> trace_files;
  /// One message per failed replicate ("replicate r: what").
  std::vector<std::string> failures;
  bool numeric_failure = false;
};

struct ExperimentResult {
  std::string output_dir;
  std::vector<RunSet> sets;

  bool any_failure() const;
  bool any_numeric_failure() const;
};

struct RunOptions {
  /// Expand the sweep block; otherwise the base values are run.
  bool sweep = false;
  /// Restrict to this variant when non-empty.
  std::string variant;
  /// Resume classifier runs from their checkpoints.
  bool resume = false;
};

/// Seed of replicate r.
inline std::uint64_t replicate_seed(std::uint64_t master, Index r) {
  return mix_seed(master, static_cast<std::uint64_t>(r));
}

/// Runs every variant R times, writing <dir>/<label>/rep_<r>.csv, a JSON
/// sidecar per trace and <dir>/manifest.json. A failing replicate is
/// recorded and its siblings still run.
ExperimentResult run_experiment(const ExperimentConfig& config, WorkerPool& pool, const RunOptions& options = {});

/// Reads <dir>/manifest.json written by run_experiment.
ExperimentResult load_manifest(const std::string& dir);

/// One labeled group of replicate traces.
struct TraceSet {
  std::string label;
  std::vector<RunTrace> traces;
};

std::vector<TraceSet> load_trace_sets(const ExperimentResult& result);

struct RateEstimate {
  double slope = 0.0;
  /// 95% half-width from the least-squares standard error.
  double half_width = 0.0;
  Index first = 0;
  Index last = 0;
  Index points = 0;
};

struct RateWindow {
  /// Fraction of the iterations skipped at the start; ignored when first is set.
  double burn_in = 0.1;
  std::optional<Index> first;
  std::optional<Index> last;
};

/// Fits log(mean_r dist_r(j)^2) = a + slope log j over the window.
RateEstimate estimate_rate(const std::vector<RunTrace>& traces, const RateWindow& window = {});

/// Median and quartiles of a column across replicates, per record index.
struct Band {
  std::vector<double> x;
  std::vector<double> median;
  std::vector<double> lower;
  std::vector<double> upper;
};

Band column_band(const std::vector<RunTrace>& traces, const std::string& x_column, const std::string& y_column);

double quantile(std::vector<double> values, double q);

struct CompareRow {
  std::string label;
  double final_objective = 0.0;
  double final_test_acc = std::numeric_limits<double>::quiet_NaN();
  double final_fwd_evals = 0.0;
  double final_example_props = std::numeric_limits<double>::quiet_NaN();
  double final_example_props_bp = std::numeric_limits<double>::quiet_NaN();
  double final_wall_ms = 0.0;
  /// Final median objective minus the reference's.
  double objective_difference = 0.0;
  /// First iteration whose median objective reaches the reference's final
  /// median objective; -1 if never.
  Index iterations_to_reference = -1;
};

struct CompareReport {
  std::string reference;
  /// Column used for alignment: example_props when present, else fwd_evals.
  std::string x_column;
  std::vector<CompareRow> rows;
  /// Long-format curves: label, x, median objective and its difference from
  /// the reference interpolated at the same x.
  std::string curves_csv;
  std::string markdown;
};

/// Aligns the sets against the first one (or the named reference).
CompareReport compare_report(const std::vector<TraceSet>& sets, const std::string& reference = "");

/// Groups sets by sweep point and tabulates each variant against the first
/// variant at that point.
std::string pairing_table(const ExperimentResult& result, const std::vector<TraceSet>& sets);

/// Plot-ready CSV: label, iter, x columns and median/quartiles of the
/// objective and, when present, dist_to_opt and test_acc.
std::string plot_data(const std::vector<TraceSet>& sets);

}  // namespace enkf

#endif  // ENKF_EXPERIMENT_HPP
