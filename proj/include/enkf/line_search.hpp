#ifndef ENKF_LINE_SEARCH_HPP
#define ENKF_LINE_SEARCH_HPP

#include "enkf/common.hpp"

#include <cmath>
#include <string>

namespace enkf {

struct ArmijoParams {
  double c = 1e-4;
  double shrink = 0.5;
  int max_trials = 20;

  void validate() const {
    if (!(c > 0.0 && c < 1.0)) throw ConfigError("armijo c must lie in (0, 1)");
    if (!(shrink > 0.0 && shrink < 1.0)) throw ConfigError("armijo shrink must lie in (0, 1)");
    if (max_trials < 1) throw ConfigError("armijo max_trials must be positive");
  }

  friend bool operator==(const ArmijoParams&, const ArmijoParams&) = default;
};

struct LineSearchResult {
  double step = 0.0;
  /// Objective at the accepted point (the start value on a null step).
  double value = 0.0;
  int trials = 0;
  bool null_step = true;
};

/// Backtracking on mu = mu0 * shrink^t. Accepts the first mu with
///   phi(theta + mu d) <= phi(theta) - c mu ||d||^2,
/// the gradient-free surrogate of the Armijo condition. Returns a null step
/// (mu = 0) when no trial qualifies or d = 0.
template <typename Objective, typename D1, typename D2>
LineSearchResult armijo_line_search(Objective&& phi, const Eigen::MatrixBase<D1>& theta,
                                    const Eigen::MatrixBase<D2>& d, double phi0, double mu0,
                                    const ArmijoParams& params) {
  params.validate();
  if (!(mu0 > 0.0) || !std::isfinite(mu0)) throw ConfigError("line search needs a positive initial step");
  LineSearchResult out;
  out.value = phi0;
  const double dd = d.squaredNorm();
  if (dd == 0.0) return out;
  double mu = mu0;
  for (int t = 0; t < params.max_trials; ++t, mu *= params.shrink) {
    const double value = phi((theta + mu * d).eval());
    ++out.trials;
    if (!std::isfinite(value)) throw NumericError("line search: objective is not finite at trial step " + std::to_string(mu));
    if (value <= phi0 - params.c * mu * dd) {
      out.step = mu;
      out.value = value;
      out.null_step = false;
      return out;
    }
  }
  return out;
}

}  // namespace enkf

#endif  // ENKF_LINE_SEARCH_HPP
