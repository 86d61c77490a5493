#include "enkf/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

namespace enkf {

std::string to_string(DirectionKind k) {
  switch (k) {
    case DirectionKind::Identity: return "identity";
    case DirectionKind::Kalman: return "kalman";
    case DirectionKind::GaussNewton: return "gauss-newton";
  }
  return "identity";
}

DirectionKind direction_kind_from_string(std::string_view name) {
  if (name == "identity") return DirectionKind::Identity;
  if (name == "kalman") return DirectionKind::Kalman;
  if (name == "gauss-newton") return DirectionKind::GaussNewton;
  throw ConfigError("unknown direction '" + std::string(name) + "' (expected identity, kalman or gauss-newton)");
}

void OptimizerConfig::validate() const {
  PerturbationSpec s = sampler;
  s.dimension = 1;
  s.validate();
  if (memory < 0) throw ConfigError("memory must be nonnegative");
  if (memory > 0 && memory < sampler.particle_count)
    throw ConfigError("memory capacity must be at least particle_count");
  if (memory > 0 && batch_size > 0)
    throw ConfigError("memory buffering needs full-data evaluation (batch_size = 0)");
  if (gamma && !(*gamma > 0.0)) throw ConfigError("gamma must be positive");
  if (gamma_data && !(*gamma_data > 0.0)) throw ConfigError("gamma_data must be positive");
  if (batch_size < 0) throw ConfigError("batch_size must be nonnegative");
  if (iterations < 0) throw ConfigError("iterations must be nonnegative");
  if (step_rule.kind == StepRule::Kind::Armijo) {
    step_rule.armijo.validate();
    if (!(step_rule.mu0 > 0.0)) throw ConfigError("mu0 must be positive");
    if (!(step_rule.warm_start > 0.0)) throw ConfigError("warm_start must be positive");
  }
  if (step_rule.strong_convexity && !(*step_rule.strong_convexity > 0.0))
    throw ConfigError("strong_convexity must be positive");
  if (!(cg_tolerance > 0.0)) throw ConfigError("cg_tolerance must be positive");
}

OptimizerState initial_state(const Problem& problem, const OptimizerConfig& config) {
  config.validate();
  require_shape(problem.initial.size() == problem.model->input_dim(), "initial point does not match the model input size");
  if (config.batch_size > problem.model->data_count())
    throw ConfigError("batch_size exceeds the number of data examples");
  if (config.step_rule.kind == StepRule::Kind::Theoretical && !config.step_rule.strong_convexity &&
      !problem.strong_convexity)
    throw ConfigError("theoretical schedule needs a strong-convexity constant; use the Armijo rule for this problem");
  OptimizerState s;
  s.theta = problem.initial;
  s.objective = problem.objective(s.theta);
  s.stream = PerturbationStream(config.sampler.seed);
  s.batch_seed = mix_seed(config.sampler.seed, 0x62617463ULL);
  s.mu_hint = config.step_rule.mu0;
  return s;
}

DeltaMatrix build_delta_matrix(const ForwardModel& model, const Eigen::Ref<const VectorXd>& theta,
                               const Eigen::Ref<const MatrixXd>& omega, IndexSpan batch, WorkerPool& pool) {
  require_shape(omega.rows() == model.input_dim() && theta.size() == model.input_dim(),
                "build_delta_matrix: perturbations have " + std::to_string(omega.rows()) + " rows, model expects " +
                    std::to_string(model.input_dim()));
  const Index k = omega.cols();
  std::vector<EvaluationTask> tasks;
  tasks.reserve(static_cast<std::size_t>(k + 1));
  auto checked = [&model, batch](VectorXd point, Index particle) -> EvaluationTask {
    return [&model, batch, point = std::move(point), particle]() {
      VectorXd out = model.evaluate(point, batch);
      if (!out.allFinite())
        throw NumericError(particle < 0 ? std::string("forward output at the center is not finite")
                                        : "forward output of particle " + std::to_string(particle) + " is not finite");
      return out;
    };
  };
  tasks.push_back(checked(theta, -1));
  for (Index i = 0; i < k; ++i) tasks.push_back(checked(theta + omega.col(i), i));

  std::vector<VectorXd> results;
  try {
    results = schedule_particle_evaluations(tasks, pool);
  } catch (const EvaluationError& e) {
    const Index particle = e.index() - 1;
    throw EvaluationError(particle, particle < 0 ? std::string("center evaluation failed: ") + e.what()
                                                 : "particle " + std::to_string(particle) + " failed: " + e.what());
  }
  DeltaMatrix dm;
  dm.center = std::move(results[0]);
  dm.columns.resize(dm.center.size(), k);
  for (Index i = 0; i < k; ++i) {
    const VectorXd& r = results[static_cast<std::size_t>(i + 1)];
    require_shape(r.size() == dm.center.size(), "build_delta_matrix: particle output size changed");
    dm.columns.col(i) = r - dm.center;
  }
  return dm;
}

IndexSet draw_batch(std::uint64_t batch_seed, Index iteration, Index data_count, Index batch_size) {
  if (batch_size < 1 || batch_size > data_count) throw ConfigError("batch size must lie in [1, data count]");
  std::mt19937_64 engine(mix_seed(batch_seed, static_cast<std::uint64_t>(iteration)));
  IndexSet pool(static_cast<std::size_t>(data_count));
  std::iota(pool.begin(), pool.end(), Index{0});
  for (Index i = 0; i < batch_size; ++i) {
    std::uniform_int_distribution<Index> pick(i, data_count - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(engine))]);
  }
  pool.resize(static_cast<std::size_t>(batch_size));
  std::sort(pool.begin(), pool.end());
  return pool;
}

VectorXd batch_loss_gradient(const LossModel& loss, const Eigen::Ref<const VectorXd>& t, IndexSpan batch,
                             BatchScheme scheme) {
  VectorXd g = loss.gradient(t, batch);
  if (batch.empty()) return g;
  const double ratio = static_cast<double>(batch.size()) / static_cast<double>(loss.data_count());
  // Averaging losses already carry the 1/|batch| factor of the scaled scheme.
  if (loss.averages_examples()) {
    if (scheme == BatchScheme::Unscaled) g *= ratio;
  } else if (scheme == BatchScheme::Scaled) {
    g /= ratio;
  }
  return g;
}

namespace {

double distance_to_optimum(const Problem& problem, const VectorXd& theta) {
  if (!problem.optimum) return std::numeric_limits<double>::quiet_NaN();
  return (theta - *problem.optimum).norm();
}

StepResult advance(OptimizerState& state, EvalBuffer<double>* buffer, const Problem& problem,
                   const OptimizerConfig& config, WorkerPool& pool) {
  const ForwardModel& model = *problem.model;
  const LossModel& loss = *problem.loss;
  require_shape(state.theta.size() == model.input_dim(), "optimizer state does not match the model input size");

  PerturbationSpec spec = config.sampler;
  spec.dimension = model.input_dim();
  const double sigma = spec.sigma_at(state.iteration);
  const MatrixXd omega_j = draw_perturbations<double>(spec, state.stream, sigma);

  const IndexSet batch = config.batch_size > 0
                             ? draw_batch(state.batch_seed, state.iteration, model.data_count(), config.batch_size)
                             : IndexSet{};
  const DeltaMatrix dm = build_delta_matrix(model, state.theta, omega_j, batch, pool);
  state.forward_evaluations += spec.particle_count + 1;

  const VectorXd g = batch_loss_gradient(loss, dm.center, batch, config.scheme);
  const double phi0 = loss.value(dm.center, batch);

  MatrixXd omega_buffered, q_buffered;
  if (buffer) {
    buffer->push(omega_j, dm.columns);
    omega_buffered = buffer->omega();
    q_buffered = buffer->q();
  }
  const MatrixXd& omega = buffer ? omega_buffered : omega_j;
  const MatrixXd& q = buffer ? q_buffered : dm.columns;
  const Index columns = omega.cols();

  StepResult out;
  VectorXd d;
  switch (config.direction) {
    case DirectionKind::Identity:
      d = direction_identity(omega, q, g);
      break;
    case DirectionKind::Kalman:
      d = direction_kalman(omega, q, config.gamma ? *config.gamma : default_gamma(q), g);
      break;
    case DirectionKind::GaussNewton: {
      const double gm = config.gamma_data ? *config.gamma_data : default_gamma(q);
      auto gn = direction_gauss_newton(omega, q, Covariance<double>::identity(gm), g, sigma, columns,
                                       config.max_cg_iterations, config.cg_tolerance);
      d = std::move(gn.direction);
      out.cg_iterations = gn.cg_iterations;
      out.cg_converged = gn.converged;
      break;
    }
  }
  if (!d.allFinite()) throw NumericError("update direction is not finite");
  out.direction_norm = d.norm();

  double mu = 0.0;
  const bool search_all = batch.empty() || config.full_data_line_search;
  bool monitor = !search_all;
  if (config.step_rule.kind == StepRule::Kind::Armijo) {
    const IndexSpan search_batch = search_all ? IndexSpan{} : IndexSpan{batch};
    auto phi = [&](const VectorXd& trial) { return loss.value(model.evaluate(trial, search_batch), search_batch); };
    const double start = search_all ? (batch.empty() ? phi0 : state.objective) : phi0;
    const LineSearchResult ls = armijo_line_search(phi, state.theta, d, start, state.mu_hint, config.step_rule.armijo);
    state.forward_evaluations += ls.trials;
    out.line_search_trials = ls.trials;
    out.null_step = ls.null_step;
    if (!ls.null_step) {
      mu = ls.step;
      state.theta += mu * d;
      state.mu_hint = config.step_rule.warm_start * mu;
    } else {
      ++state.null_steps;
    }
    if (!monitor) state.objective = ls.value;
  } else {
    const double L = config.step_rule.strong_convexity ? *config.step_rule.strong_convexity : *problem.strong_convexity;
    mu = theoretical_step_size(state.iteration + 1, L, columns, sigma);
    state.theta += mu * d;
    monitor = true;
  }
  if (!state.theta.allFinite()) throw NumericError("iterate became non-finite at iteration " + std::to_string(state.iteration + 1));
  // Monitoring evaluations are not part of the method and are not counted.
  if (monitor) state.objective = problem.objective(state.theta);
  if (!std::isfinite(state.objective))
    throw NumericError("objective became non-finite at iteration " + std::to_string(state.iteration + 1));
  ++state.iteration;

  out.record = snapshot(state, problem);
  out.record.step_size = mu;
  return out;
}

}  // namespace

TraceRecord snapshot(const OptimizerState& state, const Problem& problem) {
  TraceRecord r;
  r.iter = state.iteration;
  r.objective = state.objective;
  r.dist_to_opt = distance_to_optimum(problem, state.theta);
  r.fwd_evals = state.forward_evaluations;
  return r;
}

StepResult step(OptimizerState& state, const Problem& problem, const OptimizerConfig& config, WorkerPool& pool) {
  return advance(state, nullptr, problem, config, pool);
}

StepResult step_with_memory(OptimizerState& state, EvalBuffer<double>& buffer, const Problem& problem,
                            const OptimizerConfig& config, WorkerPool& pool) {
  if (buffer.capacity() < config.sampler.particle_count)
    throw ConfigError("memory capacity must be at least particle_count");
  return advance(state, &buffer, problem, config, pool);
}

RunTrace run(const Problem& problem, const OptimizerConfig& config, WorkerPool& pool, const TraceSink& sink) {
  const auto start = std::chrono::steady_clock::now();
  auto stamp = [&](TraceRecord& r) {
    if (config.wall_time)
      r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  };
  OptimizerState state = initial_state(problem, config);
  std::optional<EvalBuffer<double>> buffer;
  if (config.memory > 0) buffer.emplace(config.memory);

  RunTrace trace;
  auto emit = [&](TraceRecord r) {
    stamp(r);
    if (sink) sink(r);
    trace.records.push_back(std::move(r));
  };
  emit(snapshot(state, problem));
  for (Index j = 0; j < config.iterations; ++j) {
    if (state.objective <= config.objective_tolerance) break;
    StepResult s = buffer ? step_with_memory(state, *buffer, problem, config, pool) : step(state, problem, config, pool);
    emit(std::move(s.record));
    if (config.direction_tolerance > 0.0 && s.direction_norm <= config.direction_tolerance) break;
  }
  return trace;
}

}  // namespace enkf
