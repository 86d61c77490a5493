#ifndef ENKF_BASELINE_HPP
#define ENKF_BASELINE_HPP

#include "enkf/dataset.hpp"
#include "enkf/network.hpp"
#include "enkf/trace.hpp"

#include <memory>
#include <string_view>

namespace enkf {

/// Plain gradient step theta - eta g.
VectorXd sgd_step(const Eigen::Ref<const VectorXd>& theta, const Eigen::Ref<const VectorXd>& gradient, double eta);

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
  friend bool operator==(const AdamParams&, const AdamParams&) = default;
};

struct AdamState {
  VectorXd first_moment;
  VectorXd second_moment;
  /// Number of updates applied so far.
  Index steps = 0;
  AdamParams params;

  static AdamState zeros(Index size, AdamParams params = {});
};

/// Bias-corrected ADAM update with learning rate eta; advances state.steps.
VectorXd adam_step(AdamState& state, const Eigen::Ref<const VectorXd>& theta, const Eigen::Ref<const VectorXd>& gradient,
                   double eta);

/// eta_j = base / sqrt(j), j >= 1.
double inverse_sqrt_rate(double base, Index j);

struct BaselineConfig {
  enum class Method { Adam, Sgd };

  Method method = Method::Adam;
  AdamParams adam;
  double learning_rate = 1e-3;
  /// Divide the rate by sqrt(j); off keeps it constant.
  bool inverse_sqrt_schedule = true;
  /// Count j in epochs instead of steps.
  bool schedule_per_epoch = false;
  Index batch_size = 16;
  Index steps = 1000;
  /// Metrics are recorded every this many steps (and after the last one).
  Index log_every = 10;
  /// Decay on the non-bias columns of the classifier head.
  double weight_decay = 100.0;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const BaselineConfig&, const BaselineConfig&) = default;
};

std::string to_string(BaselineConfig::Method m);
BaselineConfig::Method baseline_method_from_string(std::string_view name);

/// Joint gradient of the regularized cross-entropy over (theta, W) on a
/// batch, by backpropagation. Returned as one vector [theta; vec(W)].
VectorXd network_classifier_gradient(const Network& network, const Eigen::Ref<const VectorXd>& params,
                                     const Eigen::Ref<const MatrixXd>& inputs, std::span<const int> labels,
                                     int classes, double weight_decay);

struct BaselineResult {
  RunTrace trace;
  VectorXd theta;
  MatrixXd W;
};

/// Trains network and head jointly from (theta0, W = 0) with mini-batch
/// gradients. Trace columns match the classifier loop; example_props counts
/// forward passes only and example_props_bp counts a backward pass as one
/// more forward pass.
BaselineResult train_baseline(std::shared_ptr<const Network> network, const LabeledDataset& data,
                              const VectorXd& theta0, const BaselineConfig& config, const TraceSink& sink = {});

}  // namespace enkf

#endif  // ENKF_BASELINE_HPP
