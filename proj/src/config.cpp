#include "enkf/config.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace enkf {

using nlohmann::json;

bool operator==(const DatasetConfig& a, const DatasetConfig& b) {
  return a.kind == b.kind && a.blobs == b.blobs && a.idx.train_images == b.idx.train_images &&
         a.idx.train_labels == b.idx.train_labels && a.idx.test_images == b.idx.test_images &&
         a.idx.test_labels == b.idx.test_labels && a.idx.train_count == b.idx.train_count &&
         a.idx.test_count == b.idx.test_count;
}

const std::vector<std::string>& known_variants() {
  static const std::vector<std::string> v{"vanilla", "memory", "kalman", "gauss-newton", "adam", "sgd"};
  return v;
}

bool is_baseline_variant(const std::string& variant) { return variant == "adam" || variant == "sgd"; }

namespace {

/// Walks one JSON object, remembering which keys were read so leftovers can
/// be reported as unknown.
class Reader {
public:
  Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(where() + " must be an object");
  }

  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : node_.items())
      if (!seen_.count(key)) throw ConfigError("unknown key '" + field(key) + "'");
  }

  Reader(const Reader&) = delete;
  Reader& operator=(const Reader&) = delete;

  bool has(const std::string& key) {
    seen_.insert(key);
    return node_.contains(key) && !node_.at(key).is_null();
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return node_.at(key);
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_number()) throw ConfigError(field(key) + " must be a number");
    return v.get<double>();
  }

  std::optional<double> optional_number(const std::string& key, std::optional<double> fallback) {
    if (!has(key)) return fallback;
    return number(key, 0.0);
  }

  Index integer(const std::string& key, Index fallback) {
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_number_integer()) throw ConfigError(field(key) + " must be an integer");
    return v.get<Index>();
  }

  std::uint64_t seed(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    throw ConfigError(field(key) + " must be a nonnegative integer");
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_boolean()) throw ConfigError(field(key) + " must be true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_string()) throw ConfigError(field(key) + " must be a string");
    return v.get<std::string>();
  }

  std::string where() const { return path_.empty() ? "config" : path_; }

private:
  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

/// Re-throws library validation errors with the config path prepended.
template <typename F>
void check(const std::string& field, F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    throw ConfigError(field + ": " + e.what());
  }
}

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field + " " + what);
}

std::string resolve_path(const std::string& p, const std::string& base_dir) {
  if (p.empty()) return p;
  const std::filesystem::path path(p);
  if (path.is_absolute()) return p;
  return (std::filesystem::path(base_dir) / path).lexically_normal().string();
}

DatasetConfig read_dataset(const json& node, const std::string& base_dir) {
  Reader r(node, "problem.dataset");
  DatasetConfig d;
  const std::string kind = r.string("kind", "blobs");
  if (kind == "blobs") {
    d.kind = DatasetConfig::Kind::Blobs;
    d.blobs.classes = static_cast<int>(r.integer("classes", d.blobs.classes));
    d.blobs.features = static_cast<int>(r.integer("features", d.blobs.features));
    d.blobs.train_examples = r.integer("train_examples", d.blobs.train_examples);
    d.blobs.test_examples = r.integer("test_examples", d.blobs.test_examples);
    d.blobs.separation = r.number("separation", d.blobs.separation);
    d.blobs.seed = r.seed("seed", d.blobs.seed);
    require(d.blobs.classes >= 2, r.field("classes"), "must be at least 2");
    require(d.blobs.features >= 1, r.field("features"), "must be positive");
    require(d.blobs.train_examples >= 1, r.field("train_examples"), "must be positive");
    require(d.blobs.test_examples >= 0, r.field("test_examples"), "must be nonnegative");
    require(d.blobs.separation >= 0.0, r.field("separation"), "must be nonnegative");
  } else if (kind == "idx") {
    d.kind = DatasetConfig::Kind::Idx;
    d.idx.train_images = resolve_path(r.string("train_images", ""), base_dir);
    d.idx.train_labels = resolve_path(r.string("train_labels", ""), base_dir);
    d.idx.test_images = resolve_path(r.string("test_images", ""), base_dir);
    d.idx.test_labels = resolve_path(r.string("test_labels", ""), base_dir);
    d.idx.train_count = r.integer("train_count", d.idx.train_count);
    d.idx.test_count = r.integer("test_count", d.idx.test_count);
    require(!d.idx.train_images.empty(), r.field("train_images"), "is required");
    require(!d.idx.train_labels.empty(), r.field("train_labels"), "is required");
    require(d.idx.train_count >= 1, r.field("train_count"), "must be positive");
    require(d.idx.test_count >= 0, r.field("test_count"), "must be nonnegative");
  } else {
    throw ConfigError("problem.dataset.kind must be 'blobs' or 'idx', got '" + kind + "'");
  }
  return d;
}

ProblemConfig read_problem(const json& node, const std::string& base_dir) {
  Reader r(node, "problem");
  ProblemConfig p;
  const std::string kind = r.string("kind", "quadratic");
  if (kind == "quadratic") {
    p.kind = ProblemConfig::Kind::Quadratic;
    p.quadratic.rows = r.integer("rows", p.quadratic.rows);
    p.quadratic.cols = r.integer("cols", p.quadratic.cols);
    p.quadratic.condition_number = r.number("condition_number", p.quadratic.condition_number);
    p.quadratic.seed = r.seed("seed", p.quadratic.seed);
    require(p.quadratic.cols >= 1, r.field("cols"), "must be positive");
    require(p.quadratic.rows >= p.quadratic.cols, r.field("rows"), "must be at least cols");
    require(p.quadratic.condition_number >= 1.0, r.field("condition_number"), "must be at least 1");
  } else if (kind == "oscillatory") {
    p.kind = ProblemConfig::Kind::Oscillatory;
    p.oscillatory.rows = r.integer("rows", p.oscillatory.rows);
    p.oscillatory.cols = r.integer("cols", p.oscillatory.cols);
    p.oscillatory.frequency = r.number("frequency", p.oscillatory.frequency);
    p.oscillatory.amplitude = r.number("amplitude", p.oscillatory.amplitude);
    p.oscillatory.entry_scale = r.number("entry_scale", p.oscillatory.entry_scale);
    p.oscillatory.seed = r.seed("seed", p.oscillatory.seed);
    require(p.oscillatory.rows >= 1, r.field("rows"), "must be positive");
    require(p.oscillatory.cols >= 1, r.field("cols"), "must be positive");
    require(p.oscillatory.entry_scale > 0.0, r.field("entry_scale"), "must be positive");
  } else if (kind == "network") {
    p.kind = ProblemConfig::Kind::Network;
    if (!r.has("dataset")) throw ConfigError("problem.dataset is required for network problems");
    p.dataset = read_dataset(r.raw("dataset"), base_dir);
    if (!r.has("layers")) throw ConfigError("problem.layers is required for network problems");
    const json& layers = r.raw("layers");
    if (!layers.is_array() || layers.empty()) throw ConfigError("problem.layers must be a non-empty array");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      Reader lr(layers[i], "problem.layers[" + std::to_string(i) + "]");
      LayerSpec spec;
      check(lr.field("kind"), [&] { spec.kind = layer_kind_from_string(lr.string("kind", "dense")); });
      spec.width = static_cast<int>(lr.integer("width", 0));
      spec.kernel = static_cast<int>(lr.integer("kernel", spec.kind == LayerSpec::Kind::Conv ? 5 : 0));
      if (spec.kind != LayerSpec::Kind::AvgPool) require(spec.width >= 1, lr.field("width"), "must be positive");
      if (spec.kind == LayerSpec::Kind::Conv)
        require(spec.kernel >= 1 && spec.kernel % 2 == 1, lr.field("kernel"), "must be a positive odd integer");
      p.layers.push_back(spec);
    }
    p.init_seed = r.seed("init_seed", p.init_seed);
  } else {
    throw ConfigError("problem.kind must be 'quadratic', 'oscillatory' or 'network', got '" + kind + "'");
  }
  return p;
}

StepRule read_step_rule(const json& node) {
  Reader r(node, "optimizer.step_rule");
  StepRule s;
  const std::string kind = r.string("kind", "armijo");
  if (kind == "armijo")
    s.kind = StepRule::Kind::Armijo;
  else if (kind == "theoretical")
    s.kind = StepRule::Kind::Theoretical;
  else
    throw ConfigError("optimizer.step_rule.kind must be 'armijo' or 'theoretical', got '" + kind + "'");
  s.armijo.c = r.number("c", s.armijo.c);
  s.armijo.shrink = r.number("shrink", s.armijo.shrink);
  s.armijo.max_trials = static_cast<int>(r.integer("max_trials", s.armijo.max_trials));
  s.mu0 = r.number("mu0", s.mu0);
  s.warm_start = r.number("warm_start", s.warm_start);
  s.strong_convexity = r.optional_number("strong_convexity", s.strong_convexity);
  check("optimizer.step_rule", [&] { s.armijo.validate(); });
  require(s.mu0 > 0.0, r.field("mu0"), "must be positive");
  require(s.warm_start > 0.0, r.field("warm_start"), "must be positive");
  if (s.strong_convexity) require(*s.strong_convexity > 0.0, r.field("strong_convexity"), "must be positive");
  return s;
}

void read_optimizer(const json& node, ExperimentConfig& c) {
  Reader r(node, "optimizer");
  OptimizerConfig& o = c.optimizer;
  o.sampler.particle_count = r.integer("particle_count", o.sampler.particle_count);
  require(o.sampler.particle_count >= 1, r.field("particle_count"), "must be positive");
  o.sampler.sigma = r.number("sigma", o.sampler.sigma);
  require(o.sampler.sigma > 0.0 && std::isfinite(o.sampler.sigma), r.field("sigma"), "must be positive");
  check(r.field("distribution"),
        [&] { o.sampler.distribution = distribution_from_string(r.string("distribution", to_string(o.sampler.distribution))); });
  o.sampler.sigma_decay = r.number("sigma_decay", o.sampler.sigma_decay);
  require(o.sampler.sigma_decay > 0.0, r.field("sigma_decay"), "must be positive");
  check(r.field("direction"), [&] { o.direction = direction_kind_from_string(r.string("direction", to_string(o.direction))); });
  if (r.has("memory")) {
    c.memory = r.integer("memory", 0);
    require(*c.memory >= 1, r.field("memory"), "must be positive");
  }
  c.memory_factor = r.integer("memory_factor", c.memory_factor);
  require(c.memory_factor >= 1, r.field("memory_factor"), "must be positive");
  o.gamma = r.optional_number("gamma", o.gamma);
  if (o.gamma) require(*o.gamma > 0.0, r.field("gamma"), "must be positive");
  o.gamma_data = r.optional_number("gamma_data", o.gamma_data);
  if (o.gamma_data) require(*o.gamma_data > 0.0, r.field("gamma_data"), "must be positive");
  o.batch_size = r.integer("batch_size", o.batch_size);
  require(o.batch_size >= 0, r.field("batch_size"), "must be nonnegative");
  const std::string scheme = r.string("batch_scheme", o.scheme == BatchScheme::Scaled ? "scaled" : "unscaled");
  if (scheme == "scaled")
    o.scheme = BatchScheme::Scaled;
  else if (scheme == "unscaled")
    o.scheme = BatchScheme::Unscaled;
  else
    throw ConfigError("optimizer.batch_scheme must be 'scaled' or 'unscaled'");
  if (r.has("step_rule")) o.step_rule = read_step_rule(r.raw("step_rule"));
  o.full_data_line_search = r.boolean("full_data_line_search", o.full_data_line_search);
  o.iterations = r.integer("iterations", o.iterations);
  require(o.iterations >= 0, r.field("iterations"), "must be nonnegative");
  if (r.has("objective_tolerance")) o.objective_tolerance = r.number("objective_tolerance", 0.0);
  o.direction_tolerance = r.number("direction_tolerance", o.direction_tolerance);
  require(o.direction_tolerance >= 0.0, r.field("direction_tolerance"), "must be nonnegative");
  o.max_cg_iterations = r.integer("max_cg_iterations", o.max_cg_iterations);
  o.cg_tolerance = r.number("cg_tolerance", o.cg_tolerance);
  require(o.cg_tolerance > 0.0, r.field("cg_tolerance"), "must be positive");
}

void read_inner(const json& node, InnerSolveParams& p) {
  Reader r(node, "inner");
  p.newton_iters = static_cast<int>(r.integer("newton_iters", p.newton_iters));
  p.cg_iters_max = static_cast<int>(r.integer("cg_iters_max", p.cg_iters_max));
  p.weight_decay = r.number("weight_decay", p.weight_decay);
  p.cg_tolerance = r.number("cg_tolerance", p.cg_tolerance);
  p.gradient_tolerance = r.number("gradient_tolerance", p.gradient_tolerance);
  p.max_halvings = static_cast<int>(r.integer("max_halvings", p.max_halvings));
  check("inner", [&] { p.validate(); });
}

void read_baseline(const json& node, BaselineConfig& b) {
  Reader r(node, "baseline");
  b.learning_rate = r.number("learning_rate", b.learning_rate);
  b.inverse_sqrt_schedule = r.boolean("inverse_sqrt_schedule", b.inverse_sqrt_schedule);
  b.schedule_per_epoch = r.boolean("schedule_per_epoch", b.schedule_per_epoch);
  b.batch_size = r.integer("batch_size", b.batch_size);
  b.steps = r.integer("steps", b.steps);
  b.log_every = r.integer("log_every", b.log_every);
  b.adam.beta1 = r.number("beta1", b.adam.beta1);
  b.adam.beta2 = r.number("beta2", b.adam.beta2);
  b.adam.epsilon = r.number("epsilon", b.adam.epsilon);
  check("baseline", [&] { b.validate(); });
}

const std::vector<std::string>& sweepable_keys() {
  static const std::vector<std::string> keys{
      "optimizer.particle_count", "optimizer.sigma",      "optimizer.sigma_decay", "optimizer.memory",
      "optimizer.memory_factor",  "optimizer.batch_size", "optimizer.iterations",  "optimizer.gamma",
      "optimizer.gamma_data",     "baseline.learning_rate", "baseline.steps"};
  return keys;
}

void read_sweep(const json& node, ExperimentConfig& c) {
  if (!node.is_object()) throw ConfigError("sweep must be an object mapping keys to value lists");
  for (const auto& [key, values] : node.items()) {
    const auto& keys = sweepable_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw ConfigError("sweep key '" + key + "' is not sweepable");
    if (!values.is_array() || values.empty()) throw ConfigError("sweep." + key + " must be a non-empty array");
    SweepAxis axis{key, {}};
    for (const auto& v : values) {
      if (!v.is_number()) throw ConfigError("sweep." + key + " values must be numbers");
      axis.values.push_back(v.get<double>());
    }
    c.sweep.push_back(std::move(axis));
  }
}

ExperimentConfig from_json(const json& root, const std::string& base_dir) {
  ExperimentConfig c;
  Reader r(root, "");
  c.name = r.string("name", c.name);
  c.seed = r.seed("seed", c.seed);
  c.replicates = r.integer("replicates", c.replicates);
  if (r.has("output")) {
    Reader o(r.raw("output"), "output");
    c.output_dir = o.string("dir", c.output_dir);
    c.optimizer.wall_time = o.boolean("wall_time", c.optimizer.wall_time);
    c.checkpoint = o.boolean("checkpoint", c.checkpoint);
  }
  if (r.has("problem")) c.problem = read_problem(r.raw("problem"), base_dir);
  if (r.has("variants")) {
    const json& v = r.raw("variants");
    if (!v.is_array() || v.empty()) throw ConfigError("variants must be a non-empty array of names");
    c.variants.clear();
    for (const auto& name : v) {
      if (!name.is_string()) throw ConfigError("variants entries must be strings");
      c.variants.push_back(name.get<std::string>());
    }
  }
  if (r.has("optimizer")) read_optimizer(r.raw("optimizer"), c);
  if (r.has("inner")) read_inner(r.raw("inner"), c.inner);
  c.test_every = r.integer("test_every", c.test_every);
  if (r.has("baseline")) read_baseline(r.raw("baseline"), c.baseline);
  if (r.has("sweep")) read_sweep(r.raw("sweep"), c);
  c.validate();
  return c;
}

std::pair<int, int> line_and_column(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

void ExperimentConfig::validate() const {
  require(replicates >= 1, "replicates", "must be positive");
  require(!output_dir.empty(), "output.dir", "must not be empty");
  require(!variants.empty(), "variants", "must list at least one variant");
  for (const auto& v : variants) {
    const auto& known = known_variants();
    if (std::find(known.begin(), known.end(), v) == known.end())
      throw ConfigError("variants: unknown variant '" + v + "'");
    if (is_baseline_variant(v) && problem.kind != ProblemConfig::Kind::Network)
      throw ConfigError("variants: '" + v + "' needs a network problem");
  }
  require(optimizer.sampler.particle_count >= 1, "optimizer.particle_count", "must be positive");
  if (memory) require(*memory >= optimizer.sampler.particle_count, "optimizer.memory", "must be at least particle_count");
  require(test_every >= 1, "test_every", "must be positive");
  if (problem.kind == ProblemConfig::Kind::Network) {
    require(optimizer.batch_size >= 0, "optimizer.batch_size", "must be nonnegative");
    if (std::find(variants.begin(), variants.end(), "memory") != variants.end())
      throw ConfigError("variants: 'memory' is not available for network problems");
  } else {
    if (optimizer.step_rule.kind == StepRule::Kind::Theoretical && problem.kind != ProblemConfig::Kind::Quadratic &&
        !optimizer.step_rule.strong_convexity)
      throw ConfigError("optimizer.step_rule: the theoretical schedule needs strong_convexity for this problem");
  }
  check("optimizer", [&] { resolve_optimizer(*this, variants.front(), 0).validate(); });
}

ExperimentConfig parse_config(const std::string& text, const std::string& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_and_column(text, e.byte == 0 ? 0 : e.byte - 1);
    std::string what = e.what();
    const auto pos = what.find("syntax error");
    throw ConfigError("config parse error at line " + std::to_string(line) + ", column " + std::to_string(col) + ": " +
                      (pos == std::string::npos ? what : what.substr(pos)));
  }
  return from_json(root, base_dir);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const auto parent = std::filesystem::path(path).parent_path();
  return parse_config(ss.str(), parent.empty() ? "." : parent.string());
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  json root;
  root["name"] = c.name;
  root["seed"] = c.seed;
  root["replicates"] = c.replicates;
  root["output"] = {{"dir", c.output_dir}, {"wall_time", c.optimizer.wall_time}, {"checkpoint", c.checkpoint}};

  json p;
  switch (c.problem.kind) {
    case ProblemConfig::Kind::Quadratic:
      p = {{"kind", "quadratic"},
           {"rows", c.problem.quadratic.rows},
           {"cols", c.problem.quadratic.cols},
           {"condition_number", c.problem.quadratic.condition_number},
           {"seed", c.problem.quadratic.seed}};
      break;
    case ProblemConfig::Kind::Oscillatory:
      p = {{"kind", "oscillatory"},
           {"rows", c.problem.oscillatory.rows},
           {"cols", c.problem.oscillatory.cols},
           {"frequency", c.problem.oscillatory.frequency},
           {"amplitude", c.problem.oscillatory.amplitude},
           {"entry_scale", c.problem.oscillatory.entry_scale},
           {"seed", c.problem.oscillatory.seed}};
      break;
    case ProblemConfig::Kind::Network: {
      p["kind"] = "network";
      const DatasetConfig& d = c.problem.dataset;
      if (d.kind == DatasetConfig::Kind::Blobs)
        p["dataset"] = {{"kind", "blobs"},
                        {"classes", d.blobs.classes},
                        {"features", d.blobs.features},
                        {"train_examples", d.blobs.train_examples},
                        {"test_examples", d.blobs.test_examples},
                        {"separation", d.blobs.separation},
                        {"seed", d.blobs.seed}};
      else
        p["dataset"] = {{"kind", "idx"},
                        {"train_images", d.idx.train_images},
                        {"train_labels", d.idx.train_labels},
                        {"test_images", d.idx.test_images},
                        {"test_labels", d.idx.test_labels},
                        {"train_count", d.idx.train_count},
                        {"test_count", d.idx.test_count}};
      json layers = json::array();
      for (const auto& l : c.problem.layers) {
        json lj{{"kind", to_string(l.kind)}};
        if (l.kind != LayerSpec::Kind::AvgPool) lj["width"] = l.width;
        if (l.kind == LayerSpec::Kind::Conv) lj["kernel"] = l.kernel;
        layers.push_back(lj);
      }
      p["layers"] = layers;
      p["init_seed"] = c.problem.init_seed;
      break;
    }
  }
  root["problem"] = p;
  root["variants"] = c.variants;

  const OptimizerConfig& o = c.optimizer;
  json step{{"kind", o.step_rule.kind == StepRule::Kind::Armijo ? "armijo" : "theoretical"},
            {"c", o.step_rule.armijo.c},
            {"shrink", o.step_rule.armijo.shrink},
            {"max_trials", o.step_rule.armijo.max_trials},
            {"mu0", o.step_rule.mu0},
            {"warm_start", o.step_rule.warm_start},
            {"strong_convexity", o.step_rule.strong_convexity ? json(*o.step_rule.strong_convexity) : json(nullptr)}};
  json oj{{"particle_count", o.sampler.particle_count},
          {"sigma", o.sampler.sigma},
          {"distribution", to_string(o.sampler.distribution)},
          {"sigma_decay", o.sampler.sigma_decay},
          {"direction", to_string(o.direction)},
          {"memory", c.memory ? json(*c.memory) : json(nullptr)},
          {"memory_factor", c.memory_factor},
          {"gamma", o.gamma ? json(*o.gamma) : json(nullptr)},
          {"gamma_data", o.gamma_data ? json(*o.gamma_data) : json(nullptr)},
          {"batch_size", o.batch_size},
          {"batch_scheme", o.scheme == BatchScheme::Scaled ? "scaled" : "unscaled"},
          {"step_rule", step},
          {"full_data_line_search", o.full_data_line_search},
          {"iterations", o.iterations},
          {"objective_tolerance", std::isfinite(o.objective_tolerance) ? json(o.objective_tolerance) : json(nullptr)},
          {"direction_tolerance", o.direction_tolerance},
          {"max_cg_iterations", o.max_cg_iterations},
          {"cg_tolerance", o.cg_tolerance}};
  root["optimizer"] = oj;
  root["inner"] = {{"newton_iters", c.inner.newton_iters},   {"cg_iters_max", c.inner.cg_iters_max},
                   {"weight_decay", c.inner.weight_decay},   {"cg_tolerance", c.inner.cg_tolerance},
                   {"gradient_tolerance", c.inner.gradient_tolerance}, {"max_halvings", c.inner.max_halvings}};
  root["test_every"] = c.test_every;
  const BaselineConfig& b = c.baseline;
  root["baseline"] = {{"learning_rate", b.learning_rate},
                      {"inverse_sqrt_schedule", b.inverse_sqrt_schedule},
                      {"schedule_per_epoch", b.schedule_per_epoch},
                      {"batch_size", b.batch_size},
                      {"steps", b.steps},
                      {"log_every", b.log_every},
                      {"beta1", b.adam.beta1},
                      {"beta2", b.adam.beta2},
                      {"epsilon", b.adam.epsilon}};
  if (!c.sweep.empty()) {
    json sweep = json::object();
    for (const auto& axis : c.sweep) sweep[axis.key] = axis.values;
    root["sweep"] = sweep;
  }
  return root;
}

std::string dump_config(const ExperimentConfig& config) { return config_to_json(config).dump(2); }

std::string config_hash(const ExperimentConfig& config) {
  const std::string text = config_to_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xf];
  return out;
}

std::vector<SweepPoint> expand_sweep(const ExperimentConfig& config) {
  if (config.sweep.empty()) return {{"", config}};
  std::vector<SweepPoint> points;
  std::vector<std::size_t> pos(config.sweep.size(), 0);
  for (;;) {
    json root = config_to_json(config);
    root.erase("sweep");
    std::string label;
    for (std::size_t a = 0; a < config.sweep.size(); ++a) {
      const SweepAxis& axis = config.sweep[a];
      const double v = axis.values[pos[a]];
      const auto dot = axis.key.find('.');
      const std::string section = axis.key.substr(0, dot), key = axis.key.substr(dot + 1);
      json& slot = root[section][key];
      if (std::floor(v) == v && key != "sigma" && key != "sigma_decay" && key != "gamma" && key != "gamma_data" &&
          key != "learning_rate")
        slot = static_cast<Index>(v);
      else
        slot = v;
      if (!label.empty()) label += "_";
      label += key + "=" + format_number(v);
    }
    ExperimentConfig point = from_json(root, ".");
    // Dataset paths are already resolved.
    point.problem.dataset = config.problem.dataset;
    points.push_back({label, std::move(point)});
    std::size_t a = 0;
    for (; a < pos.size(); ++a) {
      if (++pos[a] < config.sweep[a].values.size()) break;
      pos[a] = 0;
    }
    if (a == pos.size()) break;
  }
  return points;
}

OptimizerConfig resolve_optimizer(const ExperimentConfig& config, const std::string& variant, std::uint64_t seed) {
  OptimizerConfig o = config.optimizer;
  o.sampler.seed = seed;
  o.memory = 0;
  if (variant == "memory")
    o.memory = config.memory ? *config.memory : config.memory_factor * o.sampler.particle_count;
  else if (variant == "kalman")
    o.direction = DirectionKind::Kalman;
  else if (variant == "gauss-newton")
    o.direction = DirectionKind::GaussNewton;
  if (config.problem.kind == ProblemConfig::Kind::Network) o.full_data_line_search = true;
  return o;
}

}  // namespace enkf
