#ifndef ENKF_OPTIMIZER_HPP
#define ENKF_OPTIMIZER_HPP

#include "enkf/common.hpp"
#include "enkf/directions.hpp"
#include "enkf/eval_buffer.hpp"
#include "enkf/forward_model.hpp"
#include "enkf/line_search.hpp"
#include "enkf/perturbation.hpp"
#include "enkf/scheduler.hpp"
#include "enkf/trace.hpp"

#include <limits>
#include <optional>
#include <string_view>

namespace enkf {

enum class DirectionKind { Identity, Kalman, GaussNewton };

std::string to_string(DirectionKind k);
DirectionKind direction_kind_from_string(std::string_view name);

struct StepRule {
  enum class Kind { Armijo, Theoretical };

  Kind kind = Kind::Armijo;
  ArmijoParams armijo;
  /// First trial step of the very first line search.
  double mu0 = 1.0;
  /// Later searches start at warm_start times the last accepted step.
  double warm_start = 2.0;
  /// Overrides the problem's strong-convexity constant for the schedule.
  std::optional<double> strong_convexity;

  friend bool operator==(const StepRule&, const StepRule&) = default;
};

struct OptimizerConfig {
  /// dimension is taken from the problem; the other fields set the draw.
  PerturbationSpec sampler;
  DirectionKind direction = DirectionKind::Identity;
  /// Buffer capacity in columns; 0 runs the memoryless update.
  Index memory = 0;
  /// Fixed scalar for the k' x k' covariance; unset uses the adaptive default.
  std::optional<double> gamma;
  /// Fixed scalar for the m x m covariance of the Gauss-Newton solve.
  std::optional<double> gamma_data;
  /// Examples per iteration; 0 evaluates all data.
  Index batch_size = 0;
  BatchScheme scheme = BatchScheme::Scaled;
  StepRule step_rule;
  /// With batches, run the line search on the all-data objective instead of
  /// the batch objective. The trace objective is then non-increasing.
  bool full_data_line_search = false;
  Index iterations = 100;
  /// Stop once the objective falls to this level.
  double objective_tolerance = -std::numeric_limits<double>::infinity();
  /// Stop once the unscaled direction norm falls to this level.
  double direction_tolerance = 0.0;
  Index max_cg_iterations = -1;
  double cg_tolerance = 1e-12;
  /// Record elapsed time; off keeps traces byte-reproducible.
  bool wall_time = false;

  void validate() const;
  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

struct OptimizerState {
  VectorXd theta;
  Index iteration = 0;
  /// Objective at theta on the data used by the trace (all data).
  double objective = std::numeric_limits<double>::quiet_NaN();
  PerturbationStream stream;
  std::uint64_t batch_seed = 0;
  /// First trial of the next line search.
  double mu_hint = 1.0;
  /// Evaluations the method itself needed: k + 1 per iteration plus probes.
  Index forward_evaluations = 0;
  Index null_steps = 0;
};

OptimizerState initial_state(const Problem& problem, const OptimizerConfig& config);

/// Forward differences paired with the perturbations that produced them.
struct DeltaMatrix {
  MatrixXd columns;
  /// F(theta) on the same batch, reused for the loss gradient.
  VectorXd center;
};

/// Evaluates the center and the k particles (k + 1 evaluations) on the pool.
/// Column i is F(theta + omega_i) - F(theta).
DeltaMatrix build_delta_matrix(const ForwardModel& model, const Eigen::Ref<const VectorXd>& theta,
                               const Eigen::Ref<const MatrixXd>& omega, IndexSpan batch, WorkerPool& pool);

/// Batch for iteration j: batch_size distinct indices drawn uniformly, sorted.
IndexSet draw_batch(std::uint64_t batch_seed, Index iteration, Index data_count, Index batch_size);

/// Loss gradient in the units of the full-data gradient, restricted to the
/// batch and rescaled per the scheme.
VectorXd batch_loss_gradient(const LossModel& loss, const Eigen::Ref<const VectorXd>& t, IndexSpan batch,
                             BatchScheme scheme);

struct StepResult {
  TraceRecord record;
  bool null_step = false;
  int line_search_trials = 0;
  double direction_norm = 0.0;
  /// Gauss-Newton only.
  Index cg_iterations = 0;
  bool cg_converged = true;
};

/// One memoryless iteration.
StepResult step(OptimizerState& state, const Problem& problem, const OptimizerConfig& config, WorkerPool& pool);

/// One iteration whose direction uses every buffered column.
StepResult step_with_memory(OptimizerState& state, EvalBuffer<double>& buffer, const Problem& problem,
                            const OptimizerConfig& config, WorkerPool& pool);

/// Record for the current state without taking a step.
TraceRecord snapshot(const OptimizerState& state, const Problem& problem);

/// Full loop. Records go to the sink as they are produced, so a failure
/// leaves the prefix persisted before the error propagates.
RunTrace run(const Problem& problem, const OptimizerConfig& config, WorkerPool& pool, const TraceSink& sink = {});

}  // namespace enkf

#endif  // ENKF_OPTIMIZER_HPP
