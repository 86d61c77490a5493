#ifndef ENKF_VARPRO_HPP
#define ENKF_VARPRO_HPP

#include "enkf/dataset.hpp"
#include "enkf/network.hpp"
#include "enkf/optimizer.hpp"

#include <span>

namespace enkf {

/// Softmax head on frozen features. W is classes x (features + 1) with the
/// bias in the last column; Z holds one feature vector per column.

struct InnerSolveParams {
  int newton_iters = 10;
  int cg_iters_max = 20;
  /// Decay on the non-bias columns of W.
  double weight_decay = 100.0;
  /// Relative residual at which CG stops early.
  double cg_tolerance = 1e-4;
  /// Newton stops once the gradient norm is at or below this.
  double gradient_tolerance = 1e-10;
  int max_halvings = 10;

  void validate() const;
  friend bool operator==(const InnerSolveParams&, const InnerSolveParams&) = default;
};

struct ClassifierValue {
  double value = 0.0;
  MatrixXd gradient;
};

/// (1/s) sum CE(softmax(W [z; 1]), y) + (decay / 2) ||W without bias||^2.
ClassifierValue classifier_objective(const Eigen::Ref<const MatrixXd>& W, const Eigen::Ref<const MatrixXd>& Z,
                                     std::span<const int> labels, double weight_decay);

/// Exact Hessian of classifier_objective at W applied to V, matrix-free.
MatrixXd hessian_vector_product(const Eigen::Ref<const MatrixXd>& W, const Eigen::Ref<const MatrixXd>& Z,
                                std::span<const int> labels, const Eigen::Ref<const MatrixXd>& V,
                                double weight_decay);

struct InnerSolveResult {
  MatrixXd W;
  double objective = 0.0;
  double gradient_norm = 0.0;
  int newton_iterations = 0;
  int cg_iterations = 0;
  /// Objective before the first and after every Newton step.
  std::vector<double> objectives;
};

/// Damped Newton-CG from W_init (zeros when empty).
InnerSolveResult solve_inner(const Eigen::Ref<const MatrixXd>& Z, std::span<const int> labels, int classes,
                             const InnerSolveParams& params, const MatrixXd& W_init = {});

struct ClassifierMetrics {
  /// Mean cross-entropy plus the decay term.
  double loss = 0.0;
  double accuracy = 0.0;
};

ClassifierMetrics evaluate_classifier(const Eigen::Ref<const MatrixXd>& W, const Eigen::Ref<const MatrixXd>& Z,
                                      std::span<const int> labels, double weight_decay);

/// Cross-entropy of a fixed head, seen as a misfit of the stacked features.
/// value() includes the constant decay term so it matches the inner objective.
class ClassifierHeadLoss final : public LossModel {
public:
  ClassifierHeadLoss(MatrixXd W, std::vector<int> labels, double weight_decay);

  Index data_count() const override { return static_cast<Index>(labels_.size()); }
  Index outputs_per_example() const override { return W_.cols() - 1; }
  bool averages_examples() const override { return true; }

  double value(const Eigen::Ref<const VectorXd>& t, IndexSpan batch = {}) const override;
  VectorXd gradient(const Eigen::Ref<const VectorXd>& t, IndexSpan batch = {}) const override;

private:
  std::pair<MatrixXd, std::vector<int>> unpack(const Eigen::Ref<const VectorXd>& t, IndexSpan batch) const;

  MatrixXd W_;
  std::vector<int> labels_;
  double decay_term_;
};

struct OuterConfig {
  /// Particles, batch, direction and step rule of the network update.
  OptimizerConfig enkf;
  InnerSolveParams inner;
  Index outer_iterations = 200;

  void validate() const;
};

struct OuterOptions {
  /// Written after every outer iteration when non-empty.
  std::string checkpoint_path;
  /// Continue from checkpoint_path instead of starting at theta0.
  bool resume = false;
  /// Evaluate test metrics every this many iterations (NaN otherwise).
  Index test_every = 1;
};

struct OuterResult {
  RunTrace trace;
  VectorXd theta;
  MatrixXd W;
};

std::vector<std::string> outer_trace_columns();

/// Outer iteration stored in a checkpoint file.
Index checkpoint_iteration(const std::string& path);

/// Alternates the inner solve for W on all training features with one
/// ensemble step on the network weights at fixed W. The line search of that
/// step runs on the full training objective, so the objective column never
/// increases.
OuterResult train_outer(std::shared_ptr<const Network> network, const LabeledDataset& data, const VectorXd& theta0,
                        const OuterConfig& config, WorkerPool& pool, const TraceSink& sink = {},
                        const OuterOptions& options = {});

}  // namespace enkf

#endif  // ENKF_VARPRO_HPP
