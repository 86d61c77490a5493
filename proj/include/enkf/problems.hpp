#ifndef ENKF_PROBLEMS_HPP
#define ENKF_PROBLEMS_HPP

#include "enkf/forward_model.hpp"

namespace enkf {

/// F(theta) = A theta - b. Each row is one data index.
class QuadraticProblem final : public ForwardModel {
public:
  QuadraticProblem(MatrixXd a, VectorXd b);

  Index input_dim() const override { return a_.cols(); }
  Index data_count() const override { return a_.rows(); }

  VectorXd evaluate(const Eigen::Ref<const VectorXd>& theta, IndexSpan batch = {}) const override;

  bool has_jacobian() const override { return true; }
  VectorXd jacobian_transpose_product(const Eigen::Ref<const VectorXd>& theta,
                                      const Eigen::Ref<const VectorXd>& v,
                                      IndexSpan batch = {}) const override;
  MatrixXd jacobian(const Eigen::Ref<const VectorXd>& theta) const override;

  const MatrixXd& a() const { return a_; }
  const VectorXd& b() const { return b_; }

private:
  MatrixXd a_;
  VectorXd b_;
};

/// F(theta) = A theta + epsilon * sin(l * B theta), entrywise sine.
class OscillatoryProblem final : public ForwardModel {
public:
  OscillatoryProblem(MatrixXd a, MatrixXd b, double frequency, double amplitude);

  Index input_dim() const override { return a_.cols(); }
  Index data_count() const override { return a_.rows(); }

  VectorXd evaluate(const Eigen::Ref<const VectorXd>& theta, IndexSpan batch = {}) const override;

  bool has_jacobian() const override { return true; }
  VectorXd jacobian_transpose_product(const Eigen::Ref<const VectorXd>& theta,
                                      const Eigen::Ref<const VectorXd>& v,
                                      IndexSpan batch = {}) const override;
  /// J = A + epsilon l diag(cos(l B theta)) B.
  MatrixXd jacobian(const Eigen::Ref<const VectorXd>& theta) const override;

  const MatrixXd& a() const { return a_; }
  const MatrixXd& b() const { return b_; }
  double frequency() const { return frequency_; }
  double amplitude() const { return amplitude_; }

private:
  MatrixXd a_;
  MatrixXd b_;
  double frequency_;
  double amplitude_;
};

struct QuadraticSpec {
  Index rows = 30;
  Index cols = 20;
  /// Condition number of A^T A.
  double condition_number = 5.0;
  std::uint64_t seed = 1;

  friend bool operator==(const QuadraticSpec&, const QuadraticSpec&) = default;
};

struct OscillatorySpec {
  Index rows = 300;
  Index cols = 200;
  double frequency = 20.0;
  double amplitude = 1.0;
  /// Standard deviation of the i.i.d. normal entries of A and B.
  double entry_scale = 1.0;
  std::uint64_t seed = 1;

  friend bool operator==(const OscillatorySpec&, const OscillatorySpec&) = default;
};

/// Least-squares problem with prescribed spectrum: A = U diag(s) V^T with
/// s_i^2 evenly spaced in [1, condition_number]. Starts at zero; the optimum
/// and L = lambda_min(A^T A) are filled in.
Problem make_quadratic_problem(const QuadraticSpec& spec);

/// Oscillatory regression with data d = F(theta_true), theta_true ~ N(0, I).
/// Starts at zero; optimum holds theta_true (a global minimizer, phi = 0).
Problem make_oscillatory_problem(const OscillatorySpec& spec);

}  // namespace enkf

#endif  // ENKF_PROBLEMS_HPP
