#ifndef ENKF_FORWARD_MODEL_HPP
#define ENKF_FORWARD_MODEL_HPP

#include "enkf/common.hpp"

#include <memory>
#include <optional>
#include <string>

namespace enkf {

/// Forward operator F: R^n -> R^m. The output is organized by data index:
/// each of data_count() examples contributes outputs_per_example() entries,
/// so a batch of indices selects a contiguous block per example.
///
/// Implementations are immutable after construction and evaluate() must be
/// safe to call concurrently.
class ForwardModel {
public:
  virtual ~ForwardModel() = default;

  virtual Index input_dim() const = 0;
  virtual Index data_count() const = 0;
  virtual Index outputs_per_example() const { return 1; }

  Index output_dim() const { return data_count() * outputs_per_example(); }
  Index output_dim(IndexSpan batch) const {
    return batch.empty() ? output_dim() : static_cast<Index>(batch.size()) * outputs_per_example();
  }

  /// F(theta) restricted to the batch (all data when the batch is empty).
  virtual VectorXd evaluate(const Eigen::Ref<const VectorXd>& theta, IndexSpan batch = {}) const = 0;

  virtual bool has_jacobian() const { return false; }

  /// J(theta)^T v. Only for models with an analytic derivative path; the
  /// ensemble optimizer never calls this.
  virtual VectorXd jacobian_transpose_product(const Eigen::Ref<const VectorXd>& theta,
                                              const Eigen::Ref<const VectorXd>& v,
                                              IndexSpan batch = {}) const;

  /// Dense Jacobian, for the small regression problems.
  virtual MatrixXd jacobian(const Eigen::Ref<const VectorXd>& theta) const;

protected:
  void check_input(const Eigen::Ref<const VectorXd>& theta) const;
  void check_batch(IndexSpan batch) const;
};

/// Misfit D: R^m -> R with its exact gradient. Batch semantics match
/// ForwardModel: t holds the outputs of the selected examples only.
class LossModel {
public:
  virtual ~LossModel() = default;

  virtual Index data_count() const = 0;
  virtual Index outputs_per_example() const { return 1; }
  /// True when value() is a mean over the selected examples, false for a sum.
  virtual bool averages_examples() const { return false; }

  virtual double value(const Eigen::Ref<const VectorXd>& t, IndexSpan batch = {}) const = 0;
  virtual VectorXd gradient(const Eigen::Ref<const VectorXd>& t, IndexSpan batch = {}) const = 0;

protected:
  void check_argument(const Eigen::Ref<const VectorXd>& t, IndexSpan batch) const;
};

/// D(t) = 1/2 ||t - d||^2.
class LeastSquaresLoss final : public LossModel {
public:
  explicit LeastSquaresLoss(VectorXd target) : target_(std::move(target)) {}
  explicit LeastSquaresLoss(Index m) : target_(VectorXd::Zero(m)) {}

  Index data_count() const override { return target_.size(); }
  const VectorXd& target() const { return target_; }

  double value(const Eigen::Ref<const VectorXd>& t, IndexSpan batch = {}) const override;
  VectorXd gradient(const Eigen::Ref<const VectorXd>& t, IndexSpan batch = {}) const override;

private:
  VectorXd residual(const Eigen::Ref<const VectorXd>& t, IndexSpan batch) const;

  VectorXd target_;
};

/// Mean softmax cross-entropy over examples; t holds one block of `classes`
/// logits per example.
class SoftmaxCrossEntropyLoss final : public LossModel {
public:
  SoftmaxCrossEntropyLoss(std::vector<int> labels, int classes);

  Index data_count() const override { return static_cast<Index>(labels_.size()); }
  Index outputs_per_example() const override { return classes_; }
  bool averages_examples() const override { return true; }
  int classes() const { return classes_; }
  const std::vector<int>& labels() const { return labels_; }

  double value(const Eigen::Ref<const VectorXd>& t, IndexSpan batch = {}) const override;
  VectorXd gradient(const Eigen::Ref<const VectorXd>& t, IndexSpan batch = {}) const override;

private:
  std::vector<int> labels_;
  int classes_;
};

/// Numerically stable softmax of one logit block.
VectorXd softmax(const Eigen::Ref<const VectorXd>& logits);

/// Problem bundle phi(theta) = D(F(theta)) plus known metadata.
struct Problem {
  std::string name;
  std::shared_ptr<const ForwardModel> model;
  std::shared_ptr<const LossModel> loss;
  VectorXd initial;
  /// Minimizer (or data-generating truth) when known.
  std::optional<VectorXd> optimum;
  /// Strong-convexity constant L, when known.
  std::optional<double> strong_convexity;

  double objective(const Eigen::Ref<const VectorXd>& theta, IndexSpan batch = {}) const {
    return loss->value(model->evaluate(theta, batch), batch);
  }
};

/// grad phi(theta) = J(theta)^T grad D(F(theta)). Baseline and test use only.
VectorXd analytic_phi_gradient(const ForwardModel& model, const LossModel& loss,
                               const Eigen::Ref<const VectorXd>& theta, IndexSpan batch = {});

inline VectorXd analytic_phi_gradient(const Problem& p, const Eigen::Ref<const VectorXd>& theta,
                                      IndexSpan batch = {}) {
  return analytic_phi_gradient(*p.model, *p.loss, theta, batch);
}

}  // namespace enkf

#endif  // ENKF_FORWARD_MODEL_HPP
