#include "enkf/experiment.hpp"

#include "enkf/baseline.hpp"
#include "enkf/varpro.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace enkf {

namespace fs = std::filesystem;
using nlohmann::json;

bool ExperimentResult::any_failure() const {
  return std::any_of(sets.begin(), sets.end(), [](const RunSet& s) { return !s.failures.empty(); });
}

bool ExperimentResult::any_numeric_failure() const {
  return std::any_of(sets.begin(), sets.end(), [](const RunSet& s) { return s.numeric_failure; });
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string replicate_name(Index r) {
  std::string n = std::to_string(r);
  return "rep_" + std::string(n.size() < 3 ? 3 - n.size() : 0, '0') + n;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

LabeledDataset load_dataset(const DatasetConfig& d) {
  if (d.kind == DatasetConfig::Kind::Blobs) return make_blobs(d.blobs);
  return load_idx_dataset(d.idx);
}

/// Trims a trace to the rows a checkpoint covers so a resumed run does not
/// repeat iterations.
void trim_trace(const std::string& csv, Index last_iter) {
  RunTrace t = read_trace_csv(csv);
  std::erase_if(t.records, [&](const TraceRecord& r) { return r.iter > last_iter; });
  write_trace_csv(csv, t);
}

json set_to_json(const RunSet& s, const std::string& dir) {
  json files = json::array();
  for (const auto& f : s.trace_files) files.push_back(fs::path(f).lexically_relative(dir).string());
  return {{"label", s.label},
          {"variant", s.variant},
          {"point", s.point},
          {"traces", files},
          {"failures", s.failures},
          {"numeric_failure", s.numeric_failure}};
}

/// Sets of an earlier run of the same config are kept unless rerun, so a
/// run restricted to one variant extends the manifest instead of replacing it.
/// The order follows the config: sweep point, then variant.
json write_manifest(const ExperimentResult& result, const std::vector<RunSet>& earlier,
                    const std::vector<std::string>& planned, const std::string& hash) {
  std::vector<const RunSet*> all;
  for (const auto& s : result.sets) all.push_back(&s);
  for (const auto& s : earlier)
    if (std::ranges::none_of(result.sets, [&](const RunSet& r) { return r.label == s.label; })) all.push_back(&s);
  auto rank = [&](const RunSet* s) {
    return std::ranges::find(planned, s->label) - planned.begin();
  };
  std::ranges::stable_sort(all, {}, rank);
  json sets = json::array();
  for (const RunSet* s : all) sets.push_back(set_to_json(*s, result.output_dir));
  json m{{"config_hash", hash}, {"sets", sets}};
  write_text(fs::path(result.output_dir) / "manifest.json", m.dump(2) + "\n");
  return m;
}

std::string manifest_hash(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) return {};
  try {
    return json::parse(in).at("config_hash").get<std::string>();
  } catch (const json::exception&) {
    return {};
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, WorkerPool& pool, const RunOptions& options) {
  config.validate();
  std::vector<std::string> variants = config.variants;
  if (!options.variant.empty()) {
    ExperimentConfig probe = config;
    probe.variants = {options.variant};
    probe.validate();
    variants = probe.variants;
  }
  std::vector<SweepPoint> points;
  if (options.sweep) {
    if (config.sweep.empty()) throw ConfigError("sweep: the config has no sweep block");
    points = expand_sweep(config);
  } else {
    ExperimentConfig base = config;
    base.sweep.clear();
    points.push_back({"", base});
  }

  ExperimentResult result;
  result.output_dir = config.output_dir;
  fs::create_directories(config.output_dir);
  const std::string hash = config_hash(config);
  std::vector<RunSet> earlier;
  if (manifest_hash(config.output_dir) == hash) earlier = load_manifest(config.output_dir).sets;
  std::vector<std::string> planned;
  for (const SweepPoint& point : options.sweep ? expand_sweep(config) : points)
    for (const std::string& variant : config.variants)
      planned.push_back(point.label.empty() ? variant : variant + "__" + point.label);

  // Problem data does not depend on the swept keys, so it is built once.
  std::optional<Problem> problem;
  std::optional<LabeledDataset> dataset;
  std::shared_ptr<const Network> network;
  if (config.problem.kind == ProblemConfig::Kind::Quadratic)
    problem = make_quadratic_problem(config.problem.quadratic);
  else if (config.problem.kind == ProblemConfig::Kind::Oscillatory)
    problem = make_oscillatory_problem(config.problem.oscillatory);
  else {
    dataset = load_dataset(config.problem.dataset);
    network = std::make_shared<Network>(dataset->shape, config.problem.layers);
  }

  for (const SweepPoint& point : points) {
    const ExperimentConfig& pc = point.config;
    for (const std::string& variant : variants) {
      RunSet set;
      set.variant = variant;
      set.point = point.label;
      set.label = point.label.empty() ? variant : variant + "__" + point.label;
      const fs::path dir = fs::path(config.output_dir) / set.label;
      fs::create_directories(dir);
      for (Index r = 0; r < pc.replicates; ++r) {
        const std::uint64_t seed = replicate_seed(pc.seed, r);
        const fs::path csv = dir / (replicate_name(r) + ".csv");
        set.trace_files.push_back(csv.string());

        json sidecar{{"config_hash", config_hash(pc)}, {"experiment_hash", hash},  {"seed", seed},
                     {"variant", variant},             {"replicate", r},          {"point", point.label},
                     {"config", config_to_json(pc)}};
        if (!is_baseline_variant(variant)) {
          const OptimizerConfig o = resolve_optimizer(pc, variant, seed);
          sidecar["resolved"] = {{"direction", to_string(o.direction)},
                                 {"memory", o.memory},
                                 {"full_data_line_search", o.full_data_line_search}};
        }
        write_text(dir / (replicate_name(r) + ".json"), sidecar.dump(2) + "\n");

        try {
          if (problem) {
            const OptimizerConfig o = resolve_optimizer(pc, variant, seed);
            TraceWriter writer(csv.string(), {});
            run(*problem, o, pool, [&](const TraceRecord& rec) { writer.write(rec); });
          } else if (is_baseline_variant(variant)) {
            BaselineConfig b = pc.baseline;
            b.method = baseline_method_from_string(variant);
            b.seed = seed;
            b.weight_decay = pc.inner.weight_decay;
            TraceWriter writer(csv.string(), outer_trace_columns());
            train_baseline(network, *dataset, network->initial_parameters(pc.problem.init_seed), b,
                           [&](const TraceRecord& rec) { writer.write(rec); });
          } else {
            OuterConfig oc;
            oc.enkf = resolve_optimizer(pc, variant, seed);
            oc.inner = pc.inner;
            oc.outer_iterations = pc.optimizer.iterations;
            OuterOptions opts;
            opts.test_every = pc.test_every;
            if (pc.checkpoint) opts.checkpoint_path = (dir / (replicate_name(r) + ".ckpt.json")).string();
            opts.resume = options.resume && pc.checkpoint && fs::exists(opts.checkpoint_path) && fs::exists(csv);
            if (opts.resume) trim_trace(csv.string(), checkpoint_iteration(opts.checkpoint_path));
            TraceWriter writer(csv.string(), outer_trace_columns(), opts.resume);
            train_outer(network, *dataset, network->initial_parameters(pc.problem.init_seed), oc, pool,
                        [&](const TraceRecord& rec) { writer.write(rec); }, opts);
          }
        } catch (const NumericError& e) {
          set.failures.push_back("replicate " + std::to_string(r) + ": " + e.what());
          set.numeric_failure = true;
        } catch (const Error& e) {
          set.failures.push_back("replicate " + std::to_string(r) + ": " + e.what());
        }
      }
      result.sets.push_back(std::move(set));
      write_manifest(result, earlier, planned, hash);
    }
  }
  return result;
}

ExperimentResult load_manifest(const std::string& dir) {
  const fs::path path = fs::path(dir) / "manifest.json";
  std::ifstream in(path);
  if (!in) throw ConfigError("no manifest at '" + path.string() + "'; run the experiment first");
  ExperimentResult result;
  result.output_dir = dir;
  try {
    const json m = json::parse(in);
    for (const auto& s : m.at("sets")) {
      RunSet set;
      set.label = s.at("label").get<std::string>();
      set.variant = s.at("variant").get<std::string>();
      set.point = s.at("point").get<std::string>();
      for (const auto& f : s.at("traces")) set.trace_files.push_back((fs::path(dir) / f.get<std::string>()).string());
      set.failures = s.at("failures").get<std::vector<std::string>>();
      set.numeric_failure = s.at("numeric_failure").get<bool>();
      result.sets.push_back(std::move(set));
    }
  } catch (const json::exception& e) {
    throw ConfigError("malformed manifest '" + path.string() + "': " + e.what());
  }
  return result;
}

std::vector<TraceSet> load_trace_sets(const ExperimentResult& result) {
  std::vector<TraceSet> sets;
  for (const auto& s : result.sets) {
    TraceSet t{s.label, {}};
    for (const auto& f : s.trace_files)
      if (fs::exists(f)) t.traces.push_back(read_trace_csv(f));
    sets.push_back(std::move(t));
  }
  return sets;
}

RateEstimate estimate_rate(const std::vector<RunTrace>& traces, const RateWindow& window) {
  if (traces.empty()) throw ConfigError("estimate_rate: no traces");
  if (!(window.burn_in >= 0.0 && window.burn_in < 1.0)) throw ConfigError("estimate_rate: burn_in must lie in [0, 1)");
  std::map<Index, std::pair<double, Index>> sums;
  for (const RunTrace& t : traces) {
    bool any = false;
    for (const TraceRecord& r : t.records) {
      if (std::isnan(r.dist_to_opt)) continue;
      any = true;
      auto& [sum, count] = sums[r.iter];
      sum += r.dist_to_opt * r.dist_to_opt;
      ++count;
    }
    if (!any) throw ConfigError("estimate_rate: a trace has no dist_to_opt values (optimum unknown)");
  }
  const Index max_iter = sums.rbegin()->first;
  const Index burn_end = static_cast<Index>(std::ceil(window.burn_in * static_cast<double>(max_iter)));
  RateEstimate est;
  est.first = std::max<Index>(window.first ? *window.first : burn_end, 1);
  est.last = window.last.value_or(max_iter);
  std::vector<double> xs, ys;
  for (const auto& [iter, sc] : sums) {
    if (iter < est.first || iter > est.last) continue;
    if (sc.second != static_cast<Index>(traces.size())) continue;
    const double mean = sc.first / static_cast<double>(sc.second);
    if (!(mean > 0.0)) continue;
    xs.push_back(std::log(static_cast<double>(iter)));
    ys.push_back(std::log(mean));
  }
  est.points = static_cast<Index>(xs.size());
  if (est.points < 2) throw ConfigError("estimate_rate: fewer than two points in the fit window");
  const Eigen::Map<const VectorXd> x(xs.data(), est.points), y(ys.data(), est.points);
  const double xm = x.mean(), ym = y.mean();
  const double sxx = (x.array() - xm).square().sum();
  est.slope = ((x.array() - xm) * (y.array() - ym)).sum() / sxx;
  if (est.points > 2) {
    const double intercept = ym - est.slope * xm;
    const double ssr = (y.array() - intercept - est.slope * x.array()).square().sum();
    est.half_width = 1.96 * std::sqrt(ssr / static_cast<double>(est.points - 2) / sxx);
  }
  return est;
}

double quantile(std::vector<double> values, double q) {
  std::erase_if(values, [](double v) { return std::isnan(v); });
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

Band column_band(const std::vector<RunTrace>& traces, const std::string& x_column, const std::string& y_column) {
  Band band;
  if (traces.empty()) return band;
  std::vector<std::vector<double>> xs, ys;
  std::size_t length = traces.front().records.size();
  for (const auto& t : traces) {
    xs.push_back(t.column(x_column));
    ys.push_back(t.column(y_column));
    length = std::min(length, t.records.size());
  }
  for (std::size_t i = 0; i < length; ++i) {
    std::vector<double> xi, yi;
    for (std::size_t r = 0; r < traces.size(); ++r) {
      xi.push_back(xs[r][i]);
      yi.push_back(ys[r][i]);
    }
    band.x.push_back(quantile(xi, 0.5));
    band.median.push_back(quantile(yi, 0.5));
    band.lower.push_back(quantile(yi, 0.25));
    band.upper.push_back(quantile(yi, 0.75));
  }
  return band;
}

namespace {

bool has_column(const RunTrace& t, const std::string& name) { return t.extra_index(name) >= 0; }

double interpolate(const std::vector<double>& x, const std::vector<double>& y, double at) {
  if (x.empty() || at < x.front() || at > x.back()) return kNaN;
  const auto it = std::lower_bound(x.begin(), x.end(), at);
  const auto i = static_cast<std::size_t>(it - x.begin());
  if (x[i] == at) return y[i];
  const double t = (at - x[i - 1]) / (x[i] - x[i - 1]);
  return y[i - 1] + t * (y[i] - y[i - 1]);
}

double final_median(const TraceSet& s, const std::string& column) {
  std::vector<double> v;
  for (const auto& t : s.traces) {
    if (t.records.empty()) continue;
    const auto c = t.column(column);
    v.push_back(c.back());
  }
  return quantile(v, 0.5);
}

std::string fmt(double v) { return format_number(v); }

}  // namespace

CompareReport compare_report(const std::vector<TraceSet>& sets, const std::string& reference) {
  if (sets.size() < 2) throw ConfigError("compare needs at least two trace sets");
  for (const auto& s : sets)
    if (s.traces.empty()) throw ConfigError("compare: set '" + s.label + "' has no traces");
  const auto& schema = sets.front().traces.front().extra_columns;
  for (const auto& s : sets)
    for (const auto& t : s.traces)
      if (t.extra_columns != schema) throw ShapeError("compare: set '" + s.label + "' has a different trace schema");

  std::size_t ref = 0;
  if (!reference.empty()) {
    const auto it = std::find_if(sets.begin(), sets.end(), [&](const TraceSet& s) { return s.label == reference; });
    if (it == sets.end()) throw ConfigError("compare: no set labeled '" + reference + "'");
    ref = static_cast<std::size_t>(it - sets.begin());
  }
  const RunTrace& probe = sets.front().traces.front();
  const bool props = has_column(probe, "example_props");
  const bool acc = has_column(probe, "test_acc");

  CompareReport report;
  report.reference = sets[ref].label;
  report.x_column = props ? "example_props" : "fwd_evals";
  const Band ref_band = column_band(sets[ref].traces, report.x_column, "objective");
  const double ref_final = final_median(sets[ref], "objective");

  std::ostringstream csv;
  csv << "label,iter," << report.x_column << ",wall_ms,objective_median,objective_q25,objective_q75"
      << (acc ? ",test_acc_median" : "") << ",objective_minus_reference\n";
  for (const auto& s : sets) {
    const Band obj = column_band(s.traces, report.x_column, "objective");
    const Band iters = column_band(s.traces, report.x_column, "iter");
    const Band wall = column_band(s.traces, report.x_column, "wall_ms");
    const Band test = acc ? column_band(s.traces, report.x_column, "test_acc") : Band{};
    CompareRow row;
    row.label = s.label;
    row.final_objective = final_median(s, "objective");
    row.final_fwd_evals = final_median(s, "fwd_evals");
    row.final_wall_ms = final_median(s, "wall_ms");
    if (acc) row.final_test_acc = final_median(s, "test_acc");
    if (props) {
      row.final_example_props = final_median(s, "example_props");
      row.final_example_props_bp = final_median(s, "example_props_bp");
    }
    row.objective_difference = row.final_objective - ref_final;
    for (std::size_t i = 0; i < obj.median.size(); ++i)
      if (obj.median[i] <= ref_final) {
        row.iterations_to_reference = static_cast<Index>(iters.median[i]);
        break;
      }
    for (std::size_t i = 0; i < obj.x.size(); ++i) {
      csv << s.label << ',' << fmt(iters.median[i]) << ',' << fmt(obj.x[i]) << ',' << fmt(wall.median[i]) << ','
          << fmt(obj.median[i]) << ',' << fmt(obj.lower[i]) << ',' << fmt(obj.upper[i]);
      if (acc) csv << ',' << fmt(test.median[i]);
      csv << ',' << fmt(obj.median[i] - interpolate(ref_band.x, ref_band.median, obj.x[i])) << '\n';
    }
    report.rows.push_back(row);
  }
  report.curves_csv = csv.str();

  std::ostringstream md;
  md << "# Comparison against `" << report.reference << "`\n\n";
  md << "Medians over replicates. `fwd_evals` counts forward-operator calls; ";
  if (props)
    md << "`example_props` counts single-example forward passes and `example_props_bp` also counts each backward "
          "pass as one forward pass.\n\n";
  else
    md << "curves are aligned on `fwd_evals`.\n\n";
  md << "| set | final objective | difference | iterations to reference final | fwd_evals |";
  if (props) md << " example_props | example_props_bp |";
  if (acc) md << " test_acc |";
  md << " wall_ms |\n|---|---|---|---|---|";
  if (props) md << "---|---|";
  if (acc) md << "---|";
  md << "---|\n";
  for (const auto& r : report.rows) {
    md << "| " << r.label << " | " << fmt(r.final_objective) << " | " << fmt(r.objective_difference) << " | "
       << (r.iterations_to_reference < 0 ? std::string("never") : std::to_string(r.iterations_to_reference)) << " | "
       << fmt(r.final_fwd_evals) << " |";
    if (props) md << ' ' << fmt(r.final_example_props) << " | " << fmt(r.final_example_props_bp) << " |";
    if (acc) md << ' ' << fmt(r.final_test_acc) << " |";
    md << ' ' << fmt(r.final_wall_ms) << " |\n";
  }
  report.markdown = md.str();
  return report;
}

std::string pairing_table(const ExperimentResult& result, const std::vector<TraceSet>& sets) {
  require_shape(result.sets.size() == sets.size(), "pairing_table: sets do not match the manifest");
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> by_point;
  for (std::size_t i = 0; i < result.sets.size(); ++i) {
    const std::string& p = result.sets[i].point;
    if (!by_point.count(p)) order.push_back(p);
    by_point[p].push_back(i);
  }
  std::ostringstream md;
  md << "| point | variant | final objective (median) | iterations to first variant's final |\n|---|---|---|---|\n";
  for (const auto& p : order) {
    const auto& idx = by_point[p];
    const double ref_final = final_median(sets[idx.front()], "objective");
    for (std::size_t i : idx) {
      const TraceSet& s = sets[i];
      Index reach = -1;
      if (!s.traces.empty()) {
        const Band obj = column_band(s.traces, "iter", "objective");
        for (std::size_t j = 0; j < obj.median.size(); ++j)
          if (obj.median[j] <= ref_final) {
            reach = static_cast<Index>(obj.x[j]);
            break;
          }
      }
      md << "| " << (p.empty() ? "-" : p) << " | " << result.sets[i].variant << " | "
         << fmt(s.traces.empty() ? kNaN : final_median(s, "objective")) << " | "
         << (reach < 0 ? std::string("never") : std::to_string(reach)) << " |\n";
    }
  }
  return md.str();
}

std::string plot_data(const std::vector<TraceSet>& sets) {
  if (sets.empty()) throw ConfigError("plot-data: no trace sets");
  const RunTrace& probe = sets.front().traces.front();
  const bool props = has_column(probe, "example_props");
  const bool acc = has_column(probe, "test_acc");
  bool dist = false;
  for (const auto& s : sets)
    for (const auto& t : s.traces)
      for (const auto& r : t.records) dist = dist || !std::isnan(r.dist_to_opt);
  std::ostringstream csv;
  csv << "label,iter,fwd_evals" << (props ? ",example_props" : "")
      << ",objective_median,objective_q25,objective_q75";
  if (dist) csv << ",dist_to_opt_median,dist_to_opt_q25,dist_to_opt_q75";
  if (acc) csv << ",test_acc_median,test_acc_q25,test_acc_q75";
  csv << '\n';
  for (const auto& s : sets) {
    if (s.traces.empty()) continue;
    const Band obj = column_band(s.traces, "iter", "objective");
    const Band fe = column_band(s.traces, "iter", "fwd_evals");
    const Band ep = props ? column_band(s.traces, "iter", "example_props") : Band{};
    const Band dt = dist ? column_band(s.traces, "iter", "dist_to_opt") : Band{};
    const Band ta = acc ? column_band(s.traces, "iter", "test_acc") : Band{};
    for (std::size_t i = 0; i < obj.x.size(); ++i) {
      csv << s.label << ',' << fmt(obj.x[i]) << ',' << fmt(fe.median[i]);
      if (props) csv << ',' << fmt(ep.median[i]);
      csv << ',' << fmt(obj.median[i]) << ',' << fmt(obj.lower[i]) << ',' << fmt(obj.upper[i]);
      if (dist) csv << ',' << fmt(dt.median[i]) << ',' << fmt(dt.lower[i]) << ',' << fmt(dt.upper[i]);
      if (acc) csv << ',' << fmt(ta.median[i]) << ',' << fmt(ta.lower[i]) << ',' << fmt(ta.upper[i]);
      csv << '\n';
    }
  }
  return csv.str();
}

}  // namespace enkf
