#include "enkf/trace.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace enkf {

int RunTrace::extra_index(const std::string& name) const {
  for (std::size_t i = 0; i < extra_columns.size(); ++i)
    if (extra_columns[i] == name) return static_cast<int>(i);
  return -1;
}

std::vector<double> RunTrace::column(const std::string& name) const {
  std::vector<double> out;
  out.reserve(records.size());
  const int extra = extra_index(name);
  for (const TraceRecord& r : records) {
    if (name == "iter") out.push_back(static_cast<double>(r.iter));
    else if (name == "objective") out.push_back(r.objective);
    else if (name == "dist_to_opt") out.push_back(r.dist_to_opt);
    else if (name == "step_size") out.push_back(r.step_size);
    else if (name == "fwd_evals") out.push_back(static_cast<double>(r.fwd_evals));
    else if (name == "wall_ms") out.push_back(r.wall_ms);
    else if (extra >= 0) out.push_back(r.extra[static_cast<std::size_t>(extra)]);
    else throw ShapeError("trace has no column '" + name + "'");
  }
  return out;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  // Counts stay in plain notation; shortest round-trip would give 8e+05.
  const bool integral = v == std::trunc(v) && std::abs(v) < 1e15;
  const auto res = integral ? std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 0)
                            : std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::string header_line(const std::vector<std::string>& extra) {
  std::string line;
  for (const auto& c : base_trace_columns()) line += (line.empty() ? "" : ",") + c;
  for (const auto& c : extra) line += "," + c;
  return line;
}

std::string record_line(const TraceRecord& r) {
  std::string line = std::to_string(r.iter);
  line += "," + format_number(r.objective);
  line += "," + format_number(r.dist_to_opt);
  line += "," + format_number(r.step_size);
  line += "," + std::to_string(r.fwd_evals);
  line += "," + format_number(r.wall_ms);
  for (double v : r.extra) line += "," + format_number(v);
  return line;
}

double parse_number(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ConfigError("malformed number '" + s + "' in trace");
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

TraceWriter::TraceWriter(const std::string& path, std::vector<std::string> extra_columns, bool append)
    : path_(path), extra_count_(extra_columns.size()) {
  const std::string header = header_line(extra_columns);
  if (append) {
    std::ifstream in(path);
    std::string existing;
    if (in && std::getline(in, existing)) {
      if (existing != header) throw ShapeError("cannot append to '" + path + "': its columns differ");
      out_.open(path, std::ios::out | std::ios::app);
      if (!out_) throw ConfigError("cannot open trace file '" + path + "' for appending");
      return;
    }
  }
  out_.open(path, std::ios::out | std::ios::trunc);
  if (!out_) throw ConfigError("cannot open trace file '" + path + "' for writing");
  out_ << header << '\n';
  out_.flush();
}

void TraceWriter::write(const TraceRecord& r) {
  require_shape(r.extra.size() == extra_count_, "trace record has the wrong number of extra columns");
  out_ << record_line(r) << '\n';
  out_.flush();
}

void write_trace_csv(const std::string& path, const RunTrace& trace) {
  TraceWriter w(path, trace.extra_columns);
  for (const auto& r : trace.records) w.write(r);
}

RunTrace read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trace file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("trace file '" + path + "' is empty");
  const auto header = split_csv(line);
  const auto& base = base_trace_columns();
  if (header.size() < base.size()) throw ShapeError("trace '" + path + "' lacks the base columns");
  for (std::size_t i = 0; i < base.size(); ++i)
    if (header[i] != base[i]) throw ShapeError("trace '" + path + "' has column '" + header[i] + "' where '" + base[i] + "' was expected");
  RunTrace t;
  t.extra_columns.assign(header.begin() + static_cast<long>(base.size()), header.end());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    // A run killed mid-write can leave a partial last line; stop there.
    if (cells.size() != header.size()) break;
    TraceRecord r;
    r.iter = static_cast<Index>(parse_number(cells[0]));
    r.objective = parse_number(cells[1]);
    r.dist_to_opt = parse_number(cells[2]);
    r.step_size = parse_number(cells[3]);
    r.fwd_evals = static_cast<Index>(parse_number(cells[4]));
    r.wall_ms = parse_number(cells[5]);
    for (std::size_t i = base.size(); i < cells.size(); ++i) r.extra.push_back(parse_number(cells[i]));
    t.records.push_back(std::move(r));
  }
  return t;
}

}  // namespace enkf
