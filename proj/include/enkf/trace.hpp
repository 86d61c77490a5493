#ifndef ENKF_TRACE_HPP
#define ENKF_TRACE_HPP

#include "enkf/common.hpp"

#include <fstream>
#include <functional>
#include <limits>
#include <string>

namespace enkf {

/// One row of a run trace. dist_to_opt is NaN when the optimum is unknown.
struct TraceRecord {
  Index iter = 0;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double dist_to_opt = std::numeric_limits<double>::quiet_NaN();
  double step_size = 0.0;
  Index fwd_evals = 0;
  double wall_ms = 0.0;
  /// Values of RunTrace::extra_columns, same order.
  std::vector<double> extra;
};

struct RunTrace {
  std::vector<std::string> extra_columns;
  std::vector<TraceRecord> records;

  /// Index of a named extra column, or -1.
  int extra_index(const std::string& name) const;
  /// Column by name (base or extra) as a vector over records.
  std::vector<double> column(const std::string& name) const;
};

using TraceSink = std::function<void(const TraceRecord&)>;

inline const std::vector<std::string>& base_trace_columns() {
  static const std::vector<std::string> cols{"iter", "objective", "dist_to_opt", "step_size", "fwd_evals", "wall_ms"};
  return cols;
}

/// Shortest round-trip decimal form; "nan"/"inf" for non-finite values.
std::string format_number(double v);

/// Appends rows to a CSV file, flushing after each so a killed run leaves a
/// valid prefix.
class TraceWriter {
public:
  /// With append set and an existing file, rows are added after the
  /// existing ones; the header must match.
  TraceWriter(const std::string& path, std::vector<std::string> extra_columns, bool append = false);

  void write(const TraceRecord& r);
  const std::string& path() const { return path_; }

private:
  std::string path_;
  std::size_t extra_count_;
  std::ofstream out_;
};

RunTrace read_trace_csv(const std::string& path);
void write_trace_csv(const std::string& path, const RunTrace& trace);

}  // namespace enkf

#endif  // ENKF_TRACE_HPP
