#ifndef ENKF_CONFIG_HPP
#define ENKF_CONFIG_HPP

#include "enkf/baseline.hpp"
#include "enkf/dataset.hpp"
#include "enkf/network.hpp"
#include "enkf/optimizer.hpp"
#include "enkf/problems.hpp"
#include "enkf/varpro.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>

namespace enkf {

struct DatasetConfig {
  enum class Kind { Blobs, Idx };
  Kind kind = Kind::Blobs;
  BlobsSpec blobs;
  /// Paths are stored as resolved against the config file location.
  IdxSources idx;

  friend bool operator==(const DatasetConfig& a, const DatasetConfig& b);
};

struct ProblemConfig {
  enum class Kind { Quadratic, Oscillatory, Network };
  Kind kind = Kind::Quadratic;
  QuadraticSpec quadratic;
  OscillatorySpec oscillatory;
  DatasetConfig dataset;
  std::vector<LayerSpec> layers;
  /// Seed of the network's starting weights.
  std::uint64_t init_seed = 1;

  friend bool operator==(const ProblemConfig&, const ProblemConfig&) = default;
};

/// One swept key ("optimizer.particle_count", ...) with its values.
struct SweepAxis {
  std::string key;
  std::vector<double> values;

  friend bool operator==(const SweepAxis&, const SweepAxis&) = default;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  Index replicates = 1;
  std::string output_dir = "out";
  /// Write checkpoints for classifier runs so they can be resumed.
  bool checkpoint = false;
  ProblemConfig problem;
  /// Any of vanilla, memory, kalman, gauss-newton, adam, sgd.
  std::vector<std::string> variants{"vanilla"};
  /// Iterations, particles, direction and step rule shared by the ensemble
  /// variants. sampler.seed is replaced per replicate.
  OptimizerConfig optimizer;
  /// Buffer size of the memory variant; unset means memory_factor * k.
  std::optional<Index> memory;
  Index memory_factor = 5;
  InnerSolveParams inner;
  /// Test metrics of classifier runs are computed every this many iterations.
  Index test_every = 1;
  /// seed is replaced per replicate.
  BaselineConfig baseline;
  std::vector<SweepAxis> sweep;

  void validate() const;
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

const std::vector<std::string>& known_variants();

/// Parses JSON text. Unknown keys are rejected with their path; syntax errors
/// carry line and column; failed checks name the offending field. Relative
/// data paths are resolved against base_dir.
ExperimentConfig parse_config(const std::string& text, const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path);

/// Every field, defaults included. parse_config(dump_config(c)) == c.
nlohmann::json config_to_json(const ExperimentConfig& config);
std::string dump_config(const ExperimentConfig& config);

/// FNV-1a of the canonical dump, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

/// A sweep point: the config with one value per axis applied, plus a label.
struct SweepPoint {
  std::string label;
  ExperimentConfig config;
};

/// Cartesian product of the sweep axes; a single unlabeled point without axes.
std::vector<SweepPoint> expand_sweep(const ExperimentConfig& config);

/// Optimizer settings of one ensemble variant for one replicate seed.
OptimizerConfig resolve_optimizer(const ExperimentConfig& config, const std::string& variant, std::uint64_t seed);

bool is_baseline_variant(const std::string& variant);

}  // namespace enkf

#endif  // ENKF_CONFIG_HPP
