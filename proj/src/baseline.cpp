#include "enkf/baseline.hpp"

#include "enkf/optimizer.hpp"
#include "enkf/varpro.hpp"

#include <cmath>

namespace enkf {

VectorXd sgd_step(const Eigen::Ref<const VectorXd>& theta, const Eigen::Ref<const VectorXd>& gradient, double eta) {
  require_shape(theta.size() == gradient.size(), "sgd_step: gradient length does not match theta");
  if (!gradient.allFinite()) throw NumericError("sgd_step: gradient is not finite");
  return theta - eta * gradient;
}

void AdamParams::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam beta2 must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
}

AdamState AdamState::zeros(Index size, AdamParams params) {
  params.validate();
  return {VectorXd::Zero(size), VectorXd::Zero(size), 0, params};
}

VectorXd adam_step(AdamState& state, const Eigen::Ref<const VectorXd>& theta, const Eigen::Ref<const VectorXd>& gradient,
                   double eta) {
  require_shape(theta.size() == gradient.size() && state.first_moment.size() == theta.size() &&
                    state.second_moment.size() == theta.size(),
                "adam_step: theta, gradient and moments must have equal length");
  if (!gradient.allFinite()) throw NumericError("adam_step: gradient is not finite");
  const AdamParams& p = state.params;
  ++state.steps;
  state.first_moment = p.beta1 * state.first_moment + (1.0 - p.beta1) * gradient;
  state.second_moment = p.beta2 * state.second_moment + (1.0 - p.beta2) * gradient.cwiseAbs2();
  const double t = static_cast<double>(state.steps);
  const double c1 = 1.0 - std::pow(p.beta1, t);
  const double c2 = 1.0 - std::pow(p.beta2, t);
  const VectorXd m_hat = state.first_moment / c1;
  const VectorXd v_hat = state.second_moment / c2;
  return theta - eta * (m_hat.array() / (v_hat.array().sqrt() + p.epsilon)).matrix();
}

double inverse_sqrt_rate(double base, Index j) {
  if (j < 1) throw ScheduleError("learning-rate schedule starts at j = 1");
  return base / std::sqrt(static_cast<double>(j));
}

void BaselineConfig::validate() const {
  adam.validate();
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (steps < 0) throw ConfigError("steps must be nonnegative");
  if (log_every < 1) throw ConfigError("log_every must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be nonnegative");
}

std::string to_string(BaselineConfig::Method m) { return m == BaselineConfig::Method::Adam ? "adam" : "sgd"; }

BaselineConfig::Method baseline_method_from_string(std::string_view name) {
  if (name == "adam") return BaselineConfig::Method::Adam;
  if (name == "sgd") return BaselineConfig::Method::Sgd;
  throw ConfigError("unknown baseline '" + std::string(name) + "' (expected adam or sgd)");
}

VectorXd network_classifier_gradient(const Network& network, const Eigen::Ref<const VectorXd>& params,
                                     const Eigen::Ref<const MatrixXd>& inputs, std::span<const int> labels,
                                     int classes, double weight_decay) {
  const Index n = network.parameter_count();
  const Index p = network.feature_dim();
  require_shape(params.size() == n + classes * (p + 1), "network_classifier_gradient: parameter length mismatch");
  const auto theta = params.head(n);
  const MatrixXd W = params.tail(classes * (p + 1)).reshaped(classes, p + 1);
  const MatrixXd Z = network.forward(theta, inputs);
  const ClassifierValue head = classifier_objective(W, Z, labels, weight_decay);
  // Feature gradient of the mean cross-entropy: W_f^T (P - Y) / s.
  MatrixXd P = W.leftCols(p) * Z;
  P.colwise() += W.col(p);
  for (Index e = 0; e < P.cols(); ++e) {
    const double m = P.col(e).maxCoeff();
    P.col(e) = (P.col(e).array() - m).exp();
    P.col(e) /= P.col(e).sum();
    P(labels[static_cast<std::size_t>(e)], e) -= 1.0;
  }
  const MatrixXd upstream = W.leftCols(p).transpose() * P / static_cast<double>(Z.cols());
  VectorXd out(params.size());
  out.head(n) = network.backward(theta, inputs, upstream);
  out.tail(classes * (p + 1)) = head.gradient.reshaped();
  return out;
}

BaselineResult train_baseline(std::shared_ptr<const Network> network, const LabeledDataset& data,
                              const VectorXd& theta0, const BaselineConfig& config, const TraceSink& sink) {
  config.validate();
  data.validate();
  require_shape(theta0.size() == network->parameter_count(), "train_baseline: theta0 does not match the network");
  const LabeledDataset train = data.subset(Split::Train);
  const LabeledDataset test = data.subset(Split::Test);
  if (config.batch_size > train.size()) throw ConfigError("batch_size exceeds the number of training examples");
  const Index n = network->parameter_count();
  const Index p = network->feature_dim();
  const int c = train.classes;

  VectorXd params = VectorXd::Zero(n + c * (p + 1));
  params.head(n) = theta0;
  AdamState adam = AdamState::zeros(params.size(), config.adam);
  const std::uint64_t batch_seed = mix_seed(config.seed, 0x62617463ULL);
  Index example_props = 0;

  BaselineResult result;
  result.trace.extra_columns = outer_trace_columns();
  auto record = [&](Index step, double eta) {
    const auto theta = params.head(n);
    const MatrixXd W = params.tail(c * (p + 1)).reshaped(c, p + 1);
    const ClassifierMetrics tr = evaluate_classifier(W, network->forward(theta, train.inputs), train.labels, config.weight_decay);
    ClassifierMetrics te{std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    if (test.size() > 0)
      te = evaluate_classifier(W, network->forward(theta, test.inputs), test.labels, config.weight_decay);
    TraceRecord r;
    r.iter = step;
    r.objective = tr.loss;
    r.step_size = eta;
    r.fwd_evals = step;
    r.extra = {tr.loss, te.loss, tr.accuracy, te.accuracy, static_cast<double>(example_props),
               static_cast<double>(2 * example_props)};
    if (sink) sink(r);
    result.trace.records.push_back(std::move(r));
  };

  record(0, 0.0);
  for (Index j = 1; j <= config.steps; ++j) {
    const IndexSet batch = draw_batch(batch_seed, j - 1, train.size(), config.batch_size);
    MatrixXd inputs(train.inputs.rows(), config.batch_size);
    std::vector<int> labels(static_cast<std::size_t>(config.batch_size));
    for (Index b = 0; b < config.batch_size; ++b) {
      inputs.col(b) = train.inputs.col(batch[static_cast<std::size_t>(b)]);
      labels[static_cast<std::size_t>(b)] = train.labels[static_cast<std::size_t>(batch[static_cast<std::size_t>(b)])];
    }
    const VectorXd g = network_classifier_gradient(*network, params, inputs, labels, c, config.weight_decay);
    example_props += config.batch_size;
    const Index schedule_j = config.schedule_per_epoch ? 1 + ((j - 1) * config.batch_size) / train.size() : j;
    const double eta = config.inverse_sqrt_schedule ? inverse_sqrt_rate(config.learning_rate, schedule_j)
                                                    : config.learning_rate;
    params = config.method == BaselineConfig::Method::Adam ? adam_step(adam, params, g, eta) : sgd_step(params, g, eta);
    if (!params.allFinite()) throw NumericError("baseline parameters became non-finite at step " + std::to_string(j));
    if (j % config.log_every == 0 || j == config.steps) record(j, eta);
  }
  result.theta = params.head(n);
  result.W = params.tail(c * (p + 1)).reshaped(c, p + 1);
  return result;
}

}  // namespace enkf
