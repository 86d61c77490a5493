#ifndef ENKF_DIRECTIONS_HPP
#define ENKF_DIRECTIONS_HPP

#include "enkf/common.hpp"
#include "enkf/conjugate_gradient.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <string>

namespace enkf {

/// Update directions built from a perturbation block Omega (n x k), the
/// matching forward differences Q (m x k) and the loss gradient g (m).
/// All of them return the unscaled step d; the caller applies mu.

/// Data covariance Gamma: either gamma * I or a dense SPD matrix.
template <typename Scalar>
struct Covariance {
  Scalar scale = Scalar(1);
  Matrix<Scalar> dense;

  static Covariance identity(Scalar gamma) { return {gamma, {}}; }
  static Covariance matrix(Matrix<Scalar> m) { return {Scalar(1), std::move(m)}; }

  bool is_scalar() const { return dense.size() == 0; }

  template <typename Derived>
  void add_to(Eigen::MatrixBase<Derived>& h, Scalar factor) const {
    if (is_scalar())
      h.diagonal().array() += factor * scale;
    else
      h += factor * dense;
  }
};

/// Default gamma = 1e-4 * trace(Q^T Q) / k, falling back to 1 when Q = 0.
template <typename Derived>
typename Derived::Scalar default_gamma(const Eigen::MatrixBase<Derived>& q) {
  using Scalar = typename Derived::Scalar;
  if (q.cols() == 0) return Scalar(1);
  const Scalar g = Scalar(1e-4) * q.squaredNorm() / static_cast<Scalar>(q.cols());
  return g > Scalar(0) ? g : Scalar(1);
}

namespace detail {

template <typename D1, typename D2, typename D3>
void check_direction_operands(const Eigen::MatrixBase<D1>& omega, const Eigen::MatrixBase<D2>& q,
                              const Eigen::MatrixBase<D3>& g) {
  require_shape(omega.cols() == q.cols(), "direction: Omega has " + std::to_string(omega.cols()) +
                                              " columns but Q has " + std::to_string(q.cols()));
  require_shape(g.cols() == 1 && g.rows() == q.rows(),
                "direction: gradient length " + std::to_string(g.rows()) + " does not match Q rows " +
                    std::to_string(q.rows()));
}

}  // namespace detail

/// d = -Omega Q^T g  (H = I).
template <typename D1, typename D2, typename D3>
Vector<typename D1::Scalar> direction_identity(const Eigen::MatrixBase<D1>& omega, const Eigen::MatrixBase<D2>& q,
                                               const Eigen::MatrixBase<D3>& g) {
  detail::check_direction_operands(omega, q, g);
  return -(omega * (q.transpose() * g));
}

/// d = -Omega (Q^T Q + Gamma)^{-1} Q^T g by Cholesky. On factorization
/// failure Gamma is multiplied by 10, at most three times.
template <typename D1, typename D2, typename D3>
Vector<typename D1::Scalar> direction_kalman(const Eigen::MatrixBase<D1>& omega, const Eigen::MatrixBase<D2>& q,
                                             const Covariance<typename D1::Scalar>& gamma,
                                             const Eigen::MatrixBase<D3>& g) {
  using Scalar = typename D1::Scalar;
  detail::check_direction_operands(omega, q, g);
  const Index k = q.cols();
  if (!gamma.is_scalar())
    require_shape(gamma.dense.rows() == k && gamma.dense.cols() == k,
                  "direction_kalman: Gamma must be " + std::to_string(k) + "x" + std::to_string(k));
  const Matrix<Scalar> gram = q.transpose() * q;
  const Vector<Scalar> rhs = q.transpose() * g;
  Scalar factor = Scalar(1);
  for (int attempt = 0; attempt <= 3; ++attempt, factor *= Scalar(10)) {
    Matrix<Scalar> h = gram;
    gamma.add_to(h, factor);
    Eigen::LLT<Matrix<Scalar>> llt(h);
    if (llt.info() != Eigen::Success) continue;
    Vector<Scalar> coeff = llt.solve(rhs);
    if (!coeff.allFinite()) continue;
    return -(omega * coeff);
  }
  throw ConditioningError("direction_kalman: Q^T Q + Gamma is not positive definite after regularization");
}

template <typename D1, typename D2, typename D3>
Vector<typename D1::Scalar> direction_kalman(const Eigen::MatrixBase<D1>& omega, const Eigen::MatrixBase<D2>& q,
                                             typename D1::Scalar gamma, const Eigen::MatrixBase<D3>& g) {
  return direction_kalman(omega, q, Covariance<typename D1::Scalar>::identity(gamma), g);
}

template <typename Scalar>
struct GaussNewtonDirection {
  Vector<Scalar> direction;
  Index cg_iterations = 0;
  Scalar relative_residual = 0;
  /// False when CG stopped at its iteration cap above tolerance.
  bool converged = true;
};

/// d = -(1 / (sigma^2 k)) Omega Q^T z with (Q Q^T + Gamma) z = g solved by
/// Gamma-preconditioned CG without forming Q Q^T, with reorthogonalized
/// residuals. The CG cap defaults to k + 1 iterations, where the
/// preconditioned operator I + Gamma^{-1} Q Q^T has at most k + 1 distinct
/// eigenvalues.
template <typename D1, typename D2, typename D3>
GaussNewtonDirection<typename D1::Scalar> direction_gauss_newton(
    const Eigen::MatrixBase<D1>& omega, const Eigen::MatrixBase<D2>& q,
    const Covariance<typename D1::Scalar>& gamma, const Eigen::MatrixBase<D3>& g, typename D1::Scalar sigma,
    Index k, Index max_cg_iterations = -1, typename D1::Scalar tolerance = typename D1::Scalar(1e-12)) {
  using Scalar = typename D1::Scalar;
  detail::check_direction_operands(omega, q, g);
  if (!(sigma > Scalar(0)) || k < 1) throw ConfigError("direction_gauss_newton: sigma and k must be positive");
  const Index m = q.rows();
  if (!gamma.is_scalar())
    require_shape(gamma.dense.rows() == m && gamma.dense.cols() == m,
                  "direction_gauss_newton: Gamma must be " + std::to_string(m) + "x" + std::to_string(m));
  else if (!(gamma.scale > Scalar(0)))
    throw ConditioningError("direction_gauss_newton: gamma must be positive");

  Eigen::LLT<Matrix<Scalar>> gamma_llt;
  if (!gamma.is_scalar()) {
    gamma_llt.compute(gamma.dense);
    if (gamma_llt.info() != Eigen::Success) throw ConditioningError("direction_gauss_newton: Gamma is not SPD");
  }
  const auto& qd = q.derived();
  auto apply = [&](const Vector<Scalar>& v) -> Vector<Scalar> {
    Vector<Scalar> out = qd * (qd.transpose() * v);
    if (gamma.is_scalar())
      out += gamma.scale * v;
    else
      out += gamma.dense * v;
    return out;
  };
  auto precondition = [&](const Vector<Scalar>& r) -> Vector<Scalar> {
    if (gamma.is_scalar()) return r / gamma.scale;
    return gamma_llt.solve(r);
  };
  const Index cap = max_cg_iterations > 0 ? max_cg_iterations : q.cols() + 1;
  const auto cg = conjugate_gradient<Scalar>(apply, precondition, Vector<Scalar>(g), cap, tolerance, {}, true);

  GaussNewtonDirection<Scalar> out;
  out.cg_iterations = cg.iterations;
  out.relative_residual = cg.relative_residual;
  out.converged = cg.converged;
  out.direction = -(omega * (qd.transpose() * cg.solution)) / (sigma * sigma * static_cast<Scalar>(k));
  return out;
}

enum class BatchScheme { Scaled, Unscaled };

/// X X^T g: entries outside the batch are zeroed; the scaled scheme also
/// multiplies by m / |batch| so the expectation over uniform batches is g.
template <typename Derived>
Vector<typename Derived::Scalar> subsample_gradient(const Eigen::MatrixBase<Derived>& g, IndexSpan batch,
                                                    BatchScheme scheme) {
  using Scalar = typename Derived::Scalar;
  if (batch.empty()) throw ConfigError("subsample_gradient: empty batch");
  Vector<Scalar> out = Vector<Scalar>::Zero(g.size());
  std::vector<bool> seen(static_cast<std::size_t>(g.size()), false);
  for (Index i : batch) {
    require_shape(i >= 0 && i < g.size(), "subsample_gradient: batch index out of range");
    if (seen[static_cast<std::size_t>(i)]) throw ConfigError("subsample_gradient: duplicate batch index");
    seen[static_cast<std::size_t>(i)] = true;
    out(i) = g(i);
  }
  if (scheme == BatchScheme::Scaled)
    out *= static_cast<Scalar>(g.size()) / static_cast<Scalar>(batch.size());
  return out;
}

/// mu_j = 1 / (j L k sigma^2), defined for j >= 1.
inline double theoretical_step_size(Index j, double strong_convexity, Index k, double sigma) {
  if (j < 1) throw ScheduleError("theoretical step-size schedule starts at j = 1");
  if (!(strong_convexity > 0.0) || k < 1 || !(sigma > 0.0))
    throw ScheduleError("theoretical step size needs positive L, k and sigma");
  return 1.0 / (static_cast<double>(j) * strong_convexity * static_cast<double>(k) * sigma * sigma);
}

}  // namespace enkf

#endif  // ENKF_DIRECTIONS_HPP
