#ifndef ENKF_CONJUGATE_GRADIENT_HPP
#define ENKF_CONJUGATE_GRADIENT_HPP

#include "enkf/common.hpp"

#include <cmath>
#include <vector>

namespace enkf {

template <typename Scalar>
struct CgResult {
  Vector<Scalar> solution;
  Index iterations = 0;
  /// ||b - A x|| / ||b|| at exit (0 for b = 0).
  Scalar relative_residual = 0;
  bool converged = false;
};

/// Preconditioned conjugate gradients for an SPD operator given matrix-free.
/// `apply` computes A v, `precondition` computes M^{-1} r. With
/// `reorthogonalize` each residual is made M^{-1}-orthogonal to all earlier
/// ones, which keeps the finite-termination property in floating point on
/// ill-conditioned operators at the cost of storing the residuals.
template <typename Scalar, typename Apply, typename Precondition>
CgResult<Scalar> conjugate_gradient(Apply&& apply, Precondition&& precondition, const Vector<Scalar>& rhs,
                                    Index max_iterations, Scalar tolerance, Vector<Scalar> x0 = {},
                                    bool reorthogonalize = false) {
  CgResult<Scalar> out;
  const Scalar rhs_norm = rhs.norm();
  out.solution = x0.size() == rhs.size() ? std::move(x0) : Vector<Scalar>::Zero(rhs.size());
  if (rhs_norm == Scalar(0) && out.solution.isZero(0)) {
    out.converged = true;
    return out;
  }
  const Scalar scale = rhs_norm > Scalar(0) ? rhs_norm : Scalar(1);
  Vector<Scalar> r = rhs - apply(out.solution);
  out.relative_residual = r.norm() / scale;
  if (out.relative_residual <= tolerance) {
    out.converged = true;
    return out;
  }
  Vector<Scalar> z = precondition(r);
  Vector<Scalar> p = z;
  Scalar rz = r.dot(z);
  std::vector<Vector<Scalar>> residuals, preconditioned;
  std::vector<Scalar> norms;
  if (reorthogonalize) {
    residuals.push_back(r);
    preconditioned.push_back(z);
    norms.push_back(rz);
  }
  while (out.iterations < max_iterations) {
    const Vector<Scalar> ap = apply(p);
    const Scalar curvature = p.dot(ap);
    if (!(curvature > Scalar(0))) break;
    const Scalar alpha = rz / curvature;
    out.solution += alpha * p;
    r -= alpha * ap;
    ++out.iterations;
    out.relative_residual = r.norm() / scale;
    if (out.relative_residual <= tolerance) {
      out.converged = true;
      break;
    }
    if (reorthogonalize) {
      for (std::size_t i = 0; i < residuals.size(); ++i) r -= (preconditioned[i].dot(r) / norms[i]) * residuals[i];
    }
    z = precondition(r);
    const Scalar rz_next = r.dot(z);
    if (reorthogonalize) {
      residuals.push_back(r);
      preconditioned.push_back(z);
      norms.push_back(rz_next);
    }
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  return out;
}

}  // namespace enkf

#endif  // ENKF_CONJUGATE_GRADIENT_HPP
