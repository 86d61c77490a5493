#include "enkf/config.hpp"
#include "enkf/experiment.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

constexpr int kConfigFailure = 2;
constexpr int kNumericFailure = 3;

struct CommonFlags {
  std::string config;
  std::string out;
  std::size_t workers = enkf::WorkerPool::default_workers();
  std::optional<std::uint64_t> seed;
  std::string variant;
  bool resume = false;
};

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw enkf::ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

int report_failures(const enkf::ExperimentResult& result) {
  for (const auto& s : result.sets)
    for (const auto& f : s.failures) std::cerr << "failed: " << s.label << ": " << f << '\n';
  if (result.any_numeric_failure()) return kNumericFailure;
  if (result.any_failure()) return kConfigFailure;
  return 0;
}

int do_run(const CommonFlags& f, bool sweep) {
  enkf::ExperimentConfig config = enkf::load_config(f.config);
  if (!f.out.empty()) config.output_dir = f.out;
  if (f.seed) config.seed = *f.seed;
  enkf::WorkerPool pool(f.workers);
  enkf::RunOptions options;
  options.sweep = sweep;
  options.variant = f.variant;
  options.resume = f.resume;
  const auto result = enkf::run_experiment(config, pool, options);
  for (const auto& s : result.sets)
    std::cout << s.label << ": " << s.trace_files.size() - s.failures.size() << "/" << s.trace_files.size()
              << " replicates -> " << config.output_dir << "/" << s.label << '\n';
  return report_failures(result);
}

std::string output_dir(const CommonFlags& f) {
  if (!f.out.empty()) return f.out;
  if (!f.config.empty()) return enkf::load_config(f.config).output_dir;
  throw enkf::ConfigError("pass --out DIR or --config PATH to locate the experiment output");
}

int do_rate(const CommonFlags& f, const enkf::RateWindow& window) {
  const std::string dir = output_dir(f);
  const auto manifest = enkf::load_manifest(dir);
  const auto sets = enkf::load_trace_sets(manifest);
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : sets) {
    const auto est = enkf::estimate_rate(s.traces, window);
    std::cout << s.label << ": slope " << enkf::format_number(est.slope) << " +/- "
              << enkf::format_number(est.half_width) << " over j in [" << est.first << ", " << est.last << "] ("
              << est.points << " points, " << s.traces.size() << " replicates)\n";
    out.push_back({{"label", s.label},
                   {"slope", est.slope},
                   {"half_width", est.half_width},
                   {"first", est.first},
                   {"last", est.last},
                   {"points", est.points},
                   {"replicates", s.traces.size()}});
  }
  write_file(std::filesystem::path(dir) / "rate.json", out.dump(2) + "\n");
  return 0;
}

int do_compare(const CommonFlags& f, const std::string& reference) {
  const std::string dir = output_dir(f);
  const auto manifest = enkf::load_manifest(dir);
  const auto sets = enkf::load_trace_sets(manifest);
  const auto report = enkf::compare_report(sets, reference);
  std::string md = report.markdown;
  md += "\n## Pairing by sweep point\n\n" + enkf::pairing_table(manifest, sets);
  write_file(std::filesystem::path(dir) / "compare.csv", report.curves_csv);
  write_file(std::filesystem::path(dir) / "compare.md", md);
  std::cout << md;
  return 0;
}

int do_plot_data(const CommonFlags& f) {
  const std::string dir = output_dir(f);
  const auto sets = enkf::load_trace_sets(enkf::load_manifest(dir));
  const auto path = std::filesystem::path(dir) / "plot_data.csv";
  write_file(path, enkf::plot_data(sets));
  std::cout << "wrote " << path.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Derivative-free ensemble Kalman optimization experiments"};
  app.require_subcommand(1);
  CommonFlags flags;
  enkf::RateWindow window;
  enkf::Index first = 0, last = 0;
  std::string reference;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", flags.config, "Experiment config (JSON)");
    if (config_required) c->required()->check(CLI::ExistingFile);
    sub->add_option("--out", flags.out, "Output directory (overrides the config)");
    sub->add_option("--workers", flags.workers, "Worker budget for particle evaluations")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "Master seed (overrides the config)");
    sub->add_option("--variant", flags.variant, "Run only this variant");
  };
  auto* run = app.add_subcommand("run", "Run every variant of a config");
  add_common(run, true);
  run->add_flag("--resume", flags.resume, "Resume classifier runs from their checkpoints");
  auto* sweep = app.add_subcommand("sweep", "Run the cartesian product of the config's sweep block");
  add_common(sweep, true);
  sweep->add_flag("--resume", flags.resume, "Resume classifier runs from their checkpoints");
  auto* rate = app.add_subcommand("rate", "Fit the convergence rate of the distance to the optimum");
  add_common(rate, false);
  rate->add_option("--burn-in", window.burn_in, "Fraction of iterations skipped before the fit")
      ->check(CLI::Range(0.0, 0.99));
  rate->add_option("--first", first, "First iteration of the fit window");
  rate->add_option("--last", last, "Last iteration of the fit window");
  auto* compare = app.add_subcommand("compare", "Align trace sets on forward evaluations");
  add_common(compare, false);
  compare->add_option("--reference", reference, "Label of the reference set (default: first)");
  auto* plot = app.add_subcommand("plot-data", "Write median and quartile curves for plotting");
  add_common(plot, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kConfigFailure;
  }
  for (auto* sub : {run, sweep, rate, compare, plot})
    if (sub->parsed() && sub->count("--seed") > 0) flags.seed = seed;
  if (first > 0) window.first = first;
  if (last > 0) window.last = last;

  try {
    if (run->parsed()) return do_run(flags, false);
    if (sweep->parsed()) return do_run(flags, true);
    if (rate->parsed()) return do_rate(flags, window);
    if (compare->parsed()) return do_compare(flags, reference);
    if (plot->parsed()) return do_plot_data(flags);
  } catch (const enkf::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumericFailure;
  } catch (const enkf::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigFailure;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigFailure;
  }
  return 0;
}
