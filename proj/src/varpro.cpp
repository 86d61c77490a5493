#include "enkf/varpro.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

namespace enkf {

void InnerSolveParams::validate() const {
  if (newton_iters < 1) throw ConfigError("newton_iters must be positive");
  if (cg_iters_max < 1) throw ConfigError("cg_iters_max must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be nonnegative");
  if (!(cg_tolerance > 0.0)) throw ConfigError("cg_tolerance must be positive");
  if (!(gradient_tolerance >= 0.0)) throw ConfigError("gradient_tolerance must be nonnegative");
  if (max_halvings < 0) throw ConfigError("max_halvings must be nonnegative");
}

namespace {

void check_head(const Eigen::Ref<const MatrixXd>& W, const Eigen::Ref<const MatrixXd>& Z, std::span<const int> labels) {
  require_shape(W.cols() == Z.rows() + 1, "classifier: W has " + std::to_string(W.cols()) + " columns for " +
                                              std::to_string(Z.rows()) + " features (expected features + 1)");
  require_shape(static_cast<Index>(labels.size()) == Z.cols(), "classifier: label count does not match examples");
  require_shape(Z.cols() > 0, "classifier: no examples");
  for (int y : labels)
    if (y < 0 || y >= W.rows()) throw ConfigError("classifier: label " + std::to_string(y) + " outside class range");
}

MatrixXd logits(const Eigen::Ref<const MatrixXd>& W, const Eigen::Ref<const MatrixXd>& Z) {
  const Index p = Z.rows();
  MatrixXd L = W.leftCols(p) * Z;
  L.colwise() += W.col(p);
  return L;
}

/// Column-wise softmax in place; returns the per-column log-sum-exp.
VectorXd softmax_columns(MatrixXd& L) {
  VectorXd lse(L.cols());
  for (Index e = 0; e < L.cols(); ++e) {
    const double m = L.col(e).maxCoeff();
    L.col(e) = (L.col(e).array() - m).exp();
    const double total = L.col(e).sum();
    L.col(e) /= total;
    lse(e) = m + std::log(total);
  }
  return lse;
}

/// Maps a logit-space matrix R (c x s) back to W coordinates.
MatrixXd to_weights(const MatrixXd& R, const Eigen::Ref<const MatrixXd>& Z) {
  const Index p = Z.rows();
  const double inv_s = 1.0 / static_cast<double>(Z.cols());
  MatrixXd out(R.rows(), p + 1);
  out.leftCols(p) = (R * Z.transpose()) * inv_s;
  out.col(p) = R.rowwise().sum() * inv_s;
  return out;
}

double decay_term(const Eigen::Ref<const MatrixXd>& W, double weight_decay) {
  return 0.5 * weight_decay * W.leftCols(W.cols() - 1).squaredNorm();
}

}  // namespace

ClassifierValue classifier_objective(const Eigen::Ref<const MatrixXd>& W, const Eigen::Ref<const MatrixXd>& Z,
                                     std::span<const int> labels, double weight_decay) {
  check_head(W, Z, labels);
  const Index p = Z.rows();
  MatrixXd L = logits(W, Z);
  VectorXd picked(L.cols());
  for (Index e = 0; e < L.cols(); ++e) picked(e) = L(labels[static_cast<std::size_t>(e)], e);
  const VectorXd lse = softmax_columns(L);
  ClassifierValue out;
  out.value = (lse - picked).mean() + decay_term(W, weight_decay);
  for (Index e = 0; e < L.cols(); ++e) L(labels[static_cast<std::size_t>(e)], e) -= 1.0;
  out.gradient = to_weights(L, Z);
  out.gradient.leftCols(p) += weight_decay * W.leftCols(p);
  if (!std::isfinite(out.value)) throw NumericError("classifier objective is not finite");
  return out;
}

MatrixXd hessian_vector_product(const Eigen::Ref<const MatrixXd>& W, const Eigen::Ref<const MatrixXd>& Z,
                                std::span<const int> labels, const Eigen::Ref<const MatrixXd>& V,
                                double weight_decay) {
  check_head(W, Z, labels);
  require_shape(V.rows() == W.rows() && V.cols() == W.cols(), "hessian_vector_product: V must be shaped like W");
  const Index p = Z.rows();
  MatrixXd P = logits(W, Z);
  softmax_columns(P);
  const MatrixXd U = logits(V, Z);
  // Per example: (diag(p) - p p^T) u.
  MatrixXd R = P.cwiseProduct(U);
  const Eigen::RowVectorXd pu = R.colwise().sum();
  R -= P * pu.asDiagonal();
  MatrixXd out = to_weights(R, Z);
  out.leftCols(p) += weight_decay * V.leftCols(p);
  return out;
}

InnerSolveResult solve_inner(const Eigen::Ref<const MatrixXd>& Z, std::span<const int> labels, int classes,
                             const InnerSolveParams& params, const MatrixXd& W_init) {
  params.validate();
  if (classes < 2) throw ConfigError("classifier needs at least two classes");
  InnerSolveResult out;
  out.W = W_init.size() == 0 ? MatrixXd::Zero(classes, Z.rows() + 1) : W_init;
  require_shape(out.W.rows() == classes && out.W.cols() == Z.rows() + 1, "solve_inner: W_init has the wrong shape");

  ClassifierValue current = classifier_objective(out.W, Z, labels, params.weight_decay);
  out.objectives.push_back(current.value);
  const Index size = out.W.size();
  for (int it = 0; it < params.newton_iters; ++it) {
    if (current.gradient.norm() <= params.gradient_tolerance) break;
    const MatrixXd W = out.W;
    auto apply = [&](const VectorXd& v) -> VectorXd {
      const MatrixXd hv = hessian_vector_product(W, Z, labels, v.reshaped(W.rows(), W.cols()), params.weight_decay);
      return hv.reshaped();
    };
    auto identity = [](const VectorXd& r) -> VectorXd { return r; };
    const VectorXd rhs = -current.gradient.reshaped();
    const auto cg = conjugate_gradient<double>(apply, identity, rhs, params.cg_iters_max, params.cg_tolerance);
    out.cg_iterations += static_cast<int>(cg.iterations);
    const MatrixXd step = cg.solution.reshaped(W.rows(), W.cols());
    const double slope = current.gradient.reshaped().dot(cg.solution);
    if (!(slope < 0.0) || size == 0) break;

    // Backtracking halving; a step is taken only if it does not increase the objective.
    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h <= params.max_halvings; ++h, t *= 0.5) {
      ClassifierValue trial = classifier_objective(W + t * step, Z, labels, params.weight_decay);
      if (trial.value <= current.value + 1e-4 * t * slope) {
        out.W = W + t * step;
        current = std::move(trial);
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    ++out.newton_iterations;
    out.objectives.push_back(current.value);
  }
  out.objective = current.value;
  out.gradient_norm = current.gradient.norm();
  return out;
}

ClassifierMetrics evaluate_classifier(const Eigen::Ref<const MatrixXd>& W, const Eigen::Ref<const MatrixXd>& Z,
                                      std::span<const int> labels, double weight_decay) {
  // Same arithmetic as the objective, so losses compare exactly across paths.
  const double loss = classifier_objective(W, Z, labels, 0.0).value + decay_term(W, weight_decay);
  const MatrixXd L = logits(W, Z);
  Index correct = 0;
  for (Index e = 0; e < L.cols(); ++e) {
    Index best = 0;
    L.col(e).maxCoeff(&best);
    if (best == labels[static_cast<std::size_t>(e)]) ++correct;
  }
  return {loss, static_cast<double>(correct) / static_cast<double>(L.cols())};
}

ClassifierHeadLoss::ClassifierHeadLoss(MatrixXd W, std::vector<int> labels, double weight_decay)
    : W_(std::move(W)), labels_(std::move(labels)), decay_term_(decay_term(W_, weight_decay)) {
  require_shape(W_.cols() >= 2 && W_.rows() >= 2, "classifier head needs at least two classes and one feature");
  for (int y : labels_)
    if (y < 0 || y >= W_.rows()) throw ConfigError("classifier head: label " + std::to_string(y) + " outside class range");
}

std::pair<MatrixXd, std::vector<int>> ClassifierHeadLoss::unpack(const Eigen::Ref<const VectorXd>& t,
                                                                 IndexSpan batch) const {
  check_argument(t, batch);
  const Index p = outputs_per_example();
  const Index s = t.size() / p;
  std::vector<int> y(static_cast<std::size_t>(s));
  for (Index e = 0; e < s; ++e)
    y[static_cast<std::size_t>(e)] = labels_[static_cast<std::size_t>(batch.empty() ? e : batch[static_cast<std::size_t>(e)])];
  return {t.reshaped(p, s), std::move(y)};
}

double ClassifierHeadLoss::value(const Eigen::Ref<const VectorXd>& t, IndexSpan batch) const {
  const auto [Z, y] = unpack(t, batch);
  return classifier_objective(W_, Z, y, 0.0).value + decay_term_;
}

VectorXd ClassifierHeadLoss::gradient(const Eigen::Ref<const VectorXd>& t, IndexSpan batch) const {
  const auto [Z, y] = unpack(t, batch);
  const Index p = Z.rows();
  MatrixXd P = logits(W_, Z);
  softmax_columns(P);
  for (Index e = 0; e < P.cols(); ++e) P(y[static_cast<std::size_t>(e)], e) -= 1.0;
  const MatrixXd G = W_.leftCols(p).transpose() * P / static_cast<double>(Z.cols());
  return G.reshaped();
}

void OuterConfig::validate() const {
  enkf.validate();
  inner.validate();
  if (outer_iterations < 0) throw ConfigError("outer_iterations must be nonnegative");
  if (enkf.memory > 0) throw ConfigError("the classifier loop uses the memoryless update");
}

std::vector<std::string> outer_trace_columns() {
  return {"train_loss", "test_loss", "train_acc", "test_acc", "example_props", "example_props_bp"};
}

namespace {

struct Checkpoint {
  Index iteration = 0;
  VectorXd theta;
  MatrixXd W;
  std::uint64_t draws = 0;
  double mu_hint = 1.0;
  Index forward_evaluations = 0;
  Index null_steps = 0;
  Index example_props = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  nlohmann::json j;
  j["iteration"] = c.iteration;
  j["theta"] = std::vector<double>(c.theta.data(), c.theta.data() + c.theta.size());
  j["W"] = {{"rows", c.W.rows()}, {"cols", c.W.cols()}, {"data", std::vector<double>(c.W.data(), c.W.data() + c.W.size())}};
  j["draws"] = c.draws;
  j["mu_hint"] = c.mu_hint;
  j["forward_evaluations"] = c.forward_evaluations;
  j["null_steps"] = c.null_steps;
  j["example_props"] = c.example_props;
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw ConfigError("cannot write checkpoint '" + tmp + "'");
    out << j.dump() << '\n';
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw ConfigError("cannot move checkpoint into '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read checkpoint '" + path + "'");
  Checkpoint c;
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    c.iteration = j.at("iteration").get<Index>();
    const auto theta = j.at("theta").get<std::vector<double>>();
    c.theta = Eigen::Map<const VectorXd>(theta.data(), static_cast<Index>(theta.size()));
    const auto& w = j.at("W");
    const auto data = w.at("data").get<std::vector<double>>();
    const Index rows = w.at("rows").get<Index>(), cols = w.at("cols").get<Index>();
    require_shape(rows * cols == static_cast<Index>(data.size()), "checkpoint W has inconsistent shape");
    c.W = Eigen::Map<const MatrixXd>(data.data(), rows, cols);
    c.draws = j.at("draws").get<std::uint64_t>();
    c.mu_hint = j.at("mu_hint").get<double>();
    c.forward_evaluations = j.at("forward_evaluations").get<Index>();
    c.null_steps = j.at("null_steps").get<Index>();
    c.example_props = j.at("example_props").get<Index>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed checkpoint '" + path + "': " + e.what());
  }
  return c;
}

}  // namespace

Index checkpoint_iteration(const std::string& path) { return load_checkpoint(path).iteration; }

OuterResult train_outer(std::shared_ptr<const Network> network, const LabeledDataset& data, const VectorXd& theta0,
                        const OuterConfig& config, WorkerPool& pool, const TraceSink& sink,
                        const OuterOptions& options) {
  config.validate();
  data.validate();
  require_shape(theta0.size() == network->parameter_count(), "train_outer: theta0 does not match the network");
  if (options.test_every < 1) throw ConfigError("test_every must be positive");
  const LabeledDataset train = data.subset(Split::Train);
  const LabeledDataset test = data.subset(Split::Test);
  if (train.size() == 0) throw ConfigError("train_outer: no training examples");
  const auto model = std::make_shared<NetworkModel>(network, train.inputs);
  const double decay = config.inner.weight_decay;
  const Index s_train = train.size();
  const Index batch_examples = config.enkf.batch_size > 0 ? config.enkf.batch_size : s_train;

  OptimizerConfig step_config = config.enkf;
  step_config.full_data_line_search = true;

  OptimizerState state;
  state.theta = theta0;
  state.stream = PerturbationStream(step_config.sampler.seed);
  state.batch_seed = mix_seed(step_config.sampler.seed, 0x62617463ULL);
  state.mu_hint = step_config.step_rule.mu0;
  MatrixXd W;
  Index example_props = 0;
  if (options.resume) {
    if (options.checkpoint_path.empty()) throw ConfigError("resume needs a checkpoint path");
    const Checkpoint c = load_checkpoint(options.checkpoint_path);
    require_shape(c.theta.size() == theta0.size(), "checkpoint theta does not match the network");
    state.theta = c.theta;
    state.iteration = c.iteration;
    state.stream = PerturbationStream(step_config.sampler.seed, c.draws);
    state.mu_hint = c.mu_hint;
    state.forward_evaluations = c.forward_evaluations;
    state.null_steps = c.null_steps;
    W = c.W;
    example_props = c.example_props;
  }

  OuterResult result;
  result.trace.extra_columns = outer_trace_columns();

  auto inner_solve = [&]() {
    const MatrixXd Z = model->features(state.theta);
    example_props += s_train;
    W = solve_inner(Z, train.labels, train.classes, config.inner, W).W;
    return Z;
  };
  auto emit = [&](const MatrixXd& Z_train) {
    const ClassifierMetrics tr = evaluate_classifier(W, Z_train, train.labels, decay);
    ClassifierMetrics te{std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    if (test.size() > 0 && state.iteration % options.test_every == 0)
      te = evaluate_classifier(W, network->forward(state.theta, test.inputs), test.labels, decay);
    state.objective = tr.loss;
    TraceRecord r;
    r.iter = state.iteration;
    r.objective = tr.loss;
    r.step_size = 0.0;
    r.fwd_evals = state.forward_evaluations;
    r.extra = {tr.loss, te.loss, tr.accuracy, te.accuracy, static_cast<double>(example_props),
               static_cast<double>(example_props)};
    return r;
  };
  auto persist = [&]() {
    if (options.checkpoint_path.empty()) return;
    save_checkpoint(options.checkpoint_path,
                    {state.iteration, state.theta, W, state.stream.draws(), state.mu_hint, state.forward_evaluations,
                     state.null_steps, example_props});
  };
  auto publish = [&](TraceRecord r) {
    if (sink) sink(r);
    result.trace.records.push_back(std::move(r));
  };

  // A checkpoint already holds the solved head for its iterate.
  MatrixXd Z = options.resume ? model->features(state.theta) : inner_solve();
  if (!options.resume) {
    publish(emit(Z));
    persist();
  }
  while (state.iteration < config.outer_iterations) {
    Problem problem;
    problem.name = "classifier-features";
    problem.model = model;
    problem.loss = std::make_shared<ClassifierHeadLoss>(W, train.labels, decay);
    problem.initial = state.theta;
    state.objective = evaluate_classifier(W, Z, train.labels, decay).loss;

    const StepResult s = step(state, problem, step_config, pool);
    example_props += (step_config.sampler.particle_count + 1) * batch_examples +
                     static_cast<Index>(s.line_search_trials) * s_train;
    Z = inner_solve();
    TraceRecord r = emit(Z);
    r.step_size = s.record.step_size;
    publish(std::move(r));
    persist();
  }
  result.theta = state.theta;
  result.W = W;
  return result;
}

}  // namespace enkf
