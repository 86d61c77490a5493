#include "enkf/problems.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>

namespace enkf {

namespace {

MatrixXd gather_rows(const MatrixXd& m, IndexSpan batch) {
  MatrixXd out(static_cast<Index>(batch.size()), m.cols());
  for (std::size_t i = 0; i < batch.size(); ++i) out.row(static_cast<Index>(i)) = m.row(batch[i]);
  return out;
}

MatrixXd gaussian_matrix(Index rows, Index cols, double scale, std::mt19937_64& engine) {
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd m(rows, cols);
  // Column-major fill order is part of the reproducibility contract.
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = scale * normal(engine);
  return m;
}

}  // namespace

QuadraticProblem::QuadraticProblem(MatrixXd a, VectorXd b) : a_(std::move(a)), b_(std::move(b)) {
  require_shape(a_.rows() == b_.size(), "QuadraticProblem: A and b row counts differ");
  require_shape(a_.rows() > 0 && a_.cols() > 0, "QuadraticProblem: empty A");
}

VectorXd QuadraticProblem::evaluate(const Eigen::Ref<const VectorXd>& theta, IndexSpan batch) const {
  check_input(theta);
  check_batch(batch);
  if (batch.empty()) return a_ * theta - b_;
  VectorXd out(static_cast<Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i)
    out(static_cast<Index>(i)) = a_.row(batch[i]).dot(theta) - b_(batch[i]);
  return out;
}

VectorXd QuadraticProblem::jacobian_transpose_product(const Eigen::Ref<const VectorXd>& theta,
                                                      const Eigen::Ref<const VectorXd>& v,
                                                      IndexSpan batch) const {
  check_input(theta);
  check_batch(batch);
  require_shape(v.size() == output_dim(batch), "J^T v: v has wrong length");
  if (batch.empty()) return a_.transpose() * v;
  return gather_rows(a_, batch).transpose() * v;
}

MatrixXd QuadraticProblem::jacobian(const Eigen::Ref<const VectorXd>& theta) const {
  check_input(theta);
  return a_;
}

OscillatoryProblem::OscillatoryProblem(MatrixXd a, MatrixXd b, double frequency, double amplitude)
    : a_(std::move(a)), b_(std::move(b)), frequency_(frequency), amplitude_(amplitude) {
  require_shape(a_.rows() == b_.rows() && a_.cols() == b_.cols(), "OscillatoryProblem: A and B differ in shape");
  require_shape(a_.rows() > 0 && a_.cols() > 0, "OscillatoryProblem: empty A");
  if (!std::isfinite(frequency_) || !std::isfinite(amplitude_) || amplitude_ < 0.0)
    throw ConfigError("OscillatoryProblem: frequency must be finite and amplitude non-negative");
}

VectorXd OscillatoryProblem::evaluate(const Eigen::Ref<const VectorXd>& theta, IndexSpan batch) const {
  check_input(theta);
  check_batch(batch);
  if (batch.empty())
    return a_ * theta + amplitude_ * (frequency_ * (b_ * theta)).array().sin().matrix();
  VectorXd out(static_cast<Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Index r = batch[i];
    out(static_cast<Index>(i)) = a_.row(r).dot(theta) + amplitude_ * std::sin(frequency_ * b_.row(r).dot(theta));
  }
  return out;
}

VectorXd OscillatoryProblem::jacobian_transpose_product(const Eigen::Ref<const VectorXd>& theta,
                                                        const Eigen::Ref<const VectorXd>& v,
                                                        IndexSpan batch) const {
  check_input(theta);
  check_batch(batch);
  require_shape(v.size() == output_dim(batch), "J^T v: v has wrong length");
  if (batch.empty()) {
    const VectorXd c = (frequency_ * (b_ * theta)).array().cos();
    return a_.transpose() * v + amplitude_ * frequency_ * (b_.transpose() * c.cwiseProduct(v));
  }
  const MatrixXd a = gather_rows(a_, batch);
  const MatrixXd b = gather_rows(b_, batch);
  const VectorXd c = (frequency_ * (b * theta)).array().cos();
  return a.transpose() * v + amplitude_ * frequency_ * (b.transpose() * c.cwiseProduct(v));
}

MatrixXd OscillatoryProblem::jacobian(const Eigen::Ref<const VectorXd>& theta) const {
  check_input(theta);
  const VectorXd c = (frequency_ * (b_ * theta)).array().cos();
  return a_ + (amplitude_ * frequency_ * c).asDiagonal() * b_;
}

Problem make_quadratic_problem(const QuadraticSpec& spec) {
  if (spec.rows < spec.cols || spec.cols < 1)
    throw ConfigError("quadratic problem needs rows >= cols >= 1 for a unique minimizer");
  if (!(spec.condition_number >= 1.0)) throw ConfigError("quadratic condition_number must be >= 1");
  std::mt19937_64 engine(spec.seed);
  const MatrixXd gu = gaussian_matrix(spec.rows, spec.cols, 1.0, engine);
  const MatrixXd gv = gaussian_matrix(spec.cols, spec.cols, 1.0, engine);
  const MatrixXd u = Eigen::HouseholderQR<MatrixXd>(gu).householderQ() * MatrixXd::Identity(spec.rows, spec.cols);
  const MatrixXd v = Eigen::HouseholderQR<MatrixXd>(gv).householderQ() * MatrixXd::Identity(spec.cols, spec.cols);
  VectorXd s(spec.cols);
  for (Index i = 0; i < spec.cols; ++i) {
    const double frac = spec.cols == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(spec.cols - 1);
    s(i) = std::sqrt(1.0 + frac * (spec.condition_number - 1.0));
  }
  MatrixXd a = u * s.asDiagonal() * v.transpose();
  VectorXd b = gaussian_matrix(spec.rows, 1, 1.0, engine);

  Problem p;
  p.name = "quadratic";
  p.optimum = a.colPivHouseholderQr().solve(b);
  p.strong_convexity = Eigen::SelfAdjointEigenSolver<MatrixXd>(a.transpose() * a).eigenvalues().minCoeff();
  p.initial = VectorXd::Zero(spec.cols);
  p.loss = std::make_shared<LeastSquaresLoss>(spec.rows);
  p.model = std::make_shared<QuadraticProblem>(std::move(a), std::move(b));
  return p;
}

Problem make_oscillatory_problem(const OscillatorySpec& spec) {
  if (spec.rows < 1 || spec.cols < 1) throw ConfigError("oscillatory problem needs positive dimensions");
  if (!(spec.entry_scale > 0.0)) throw ConfigError("oscillatory entry_scale must be positive");
  std::mt19937_64 engine(spec.seed);
  MatrixXd a = gaussian_matrix(spec.rows, spec.cols, spec.entry_scale, engine);
  MatrixXd b = gaussian_matrix(spec.rows, spec.cols, spec.entry_scale, engine);
  VectorXd truth = gaussian_matrix(spec.cols, 1, 1.0, engine);
  auto model = std::make_shared<OscillatoryProblem>(std::move(a), std::move(b), spec.frequency, spec.amplitude);

  Problem p;
  p.name = "oscillatory";
  p.loss = std::make_shared<LeastSquaresLoss>(model->evaluate(truth));
  p.model = std::move(model);
  p.optimum = std::move(truth);
  p.initial = VectorXd::Zero(spec.cols);
  return p;
}

}  // namespace enkf
