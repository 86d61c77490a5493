#include "enkf/forward_model.hpp"

#include <cmath>
#include <string>

namespace enkf {

VectorXd ForwardModel::jacobian_transpose_product(const Eigen::Ref<const VectorXd>&,
                                                  const Eigen::Ref<const VectorXd>&, IndexSpan) const {
  throw CapabilityError("forward model has no analytic derivative path");
}

MatrixXd ForwardModel::jacobian(const Eigen::Ref<const VectorXd>&) const {
  throw CapabilityError("forward model has no dense Jacobian");
}

void ForwardModel::check_input(const Eigen::Ref<const VectorXd>& theta) const {
  if (theta.size() != input_dim())
    throw ShapeError("parameter vector has length " + std::to_string(theta.size()) + ", model expects " +
                     std::to_string(input_dim()));
}

void ForwardModel::check_batch(IndexSpan batch) const {
  for (Index i : batch)
    if (i < 0 || i >= data_count()) throw ShapeError("batch index " + std::to_string(i) + " out of range");
}

void LossModel::check_argument(const Eigen::Ref<const VectorXd>& t, IndexSpan batch) const {
  const Index blocks = batch.empty() ? data_count() : static_cast<Index>(batch.size());
  if (t.size() != blocks * outputs_per_example())
    throw ShapeError("loss argument has length " + std::to_string(t.size()) + ", expected " +
                     std::to_string(blocks * outputs_per_example()));
  for (Index i : batch)
    if (i < 0 || i >= data_count()) throw ShapeError("batch index " + std::to_string(i) + " out of range");
  if (!t.allFinite()) throw NumericError("loss argument contains non-finite entries");
}

VectorXd LeastSquaresLoss::residual(const Eigen::Ref<const VectorXd>& t, IndexSpan batch) const {
  check_argument(t, batch);
  if (batch.empty()) return t - target_;
  VectorXd r(t.size());
  for (std::size_t i = 0; i < batch.size(); ++i) r(static_cast<Index>(i)) = t(static_cast<Index>(i)) - target_(batch[i]);
  return r;
}

double LeastSquaresLoss::value(const Eigen::Ref<const VectorXd>& t, IndexSpan batch) const {
  return 0.5 * residual(t, batch).squaredNorm();
}

VectorXd LeastSquaresLoss::gradient(const Eigen::Ref<const VectorXd>& t, IndexSpan batch) const {
  return residual(t, batch);
}

SoftmaxCrossEntropyLoss::SoftmaxCrossEntropyLoss(std::vector<int> labels, int classes)
    : labels_(std::move(labels)), classes_(classes) {
  if (classes_ < 2) throw ConfigError("cross-entropy needs at least two classes");
  for (int y : labels_)
    if (y < 0 || y >= classes_) throw ConfigError("label " + std::to_string(y) + " outside class range");
}

VectorXd softmax(const Eigen::Ref<const VectorXd>& logits) {
  const double shift = logits.maxCoeff();
  VectorXd e = (logits.array() - shift).exp();
  return e / e.sum();
}

namespace {

double log_sum_exp(const Eigen::Ref<const VectorXd>& logits) {
  const double shift = logits.maxCoeff();
  return shift + std::log((logits.array() - shift).exp().sum());
}

}  // namespace

double SoftmaxCrossEntropyLoss::value(const Eigen::Ref<const VectorXd>& t, IndexSpan batch) const {
  check_argument(t, batch);
  const Index s = t.size() / classes_;
  double total = 0.0;
  for (Index e = 0; e < s; ++e) {
    const int y = labels_[static_cast<std::size_t>(batch.empty() ? e : batch[static_cast<std::size_t>(e)])];
    const auto block = t.segment(e * classes_, classes_);
    total += log_sum_exp(block) - block(y);
  }
  return total / static_cast<double>(s);
}

VectorXd SoftmaxCrossEntropyLoss::gradient(const Eigen::Ref<const VectorXd>& t, IndexSpan batch) const {
  check_argument(t, batch);
  const Index s = t.size() / classes_;
  VectorXd g(t.size());
  for (Index e = 0; e < s; ++e) {
    const int y = labels_[static_cast<std::size_t>(batch.empty() ? e : batch[static_cast<std::size_t>(e)])];
    VectorXd p = softmax(t.segment(e * classes_, classes_));
    p(y) -= 1.0;
    g.segment(e * classes_, classes_) = p / static_cast<double>(s);
  }
  return g;
}

VectorXd analytic_phi_gradient(const ForwardModel& model, const LossModel& loss,
                               const Eigen::Ref<const VectorXd>& theta, IndexSpan batch) {
  if (!model.has_jacobian()) throw CapabilityError("problem does not support analytic differentiation");
  const VectorXd t = model.evaluate(theta, batch);
  return model.jacobian_transpose_product(theta, loss.gradient(t, batch), batch);
}

}  // namespace enkf
