#ifndef ENKF_PERTURBATION_HPP
#define ENKF_PERTURBATION_HPP

#include "enkf/common.hpp"

#include <cmath>
#include <random>
#include <string>
#include <string_view>

namespace enkf {

enum class Distribution { Gaussian, Rademacher };

std::string to_string(Distribution d);
Distribution distribution_from_string(std::string_view name);

/// Law of the particle offsets. Both distributions have mean zero and
/// covariance sigma^2 I.
struct PerturbationSpec {
  Index dimension = 1;
  Index particle_count = 1;
  double sigma = 1.0;
  Distribution distribution = Distribution::Gaussian;
  std::uint64_t seed = 0;
  /// Geometric factor rho in sigma_j = sigma * rho^j. 1 keeps sigma fixed.
  double sigma_decay = 1.0;

  void validate() const;

  /// sigma used at iteration j (j counted from 0).
  double sigma_at(Index iteration) const {
    return sigma_decay == 1.0 ? sigma : sigma * std::pow(sigma_decay, static_cast<double>(iteration));
  }

  friend bool operator==(const PerturbationSpec&, const PerturbationSpec&) = default;
};

/// Counter-based source of perturbation matrices. Draw t, column c is
/// generated from its own engine seeded with mix(mix(seed, t), c), so a
/// matrix never depends on how its columns are later consumed.
class PerturbationStream {
public:
  explicit PerturbationStream(std::uint64_t seed = 0, std::uint64_t draws = 0) : seed_(seed), counter_(draws) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t draws() const { return counter_; }

  /// Returns the seed of the next draw and advances the counter.
  std::uint64_t advance() { return mix_seed(seed_, counter_++); }

private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

/// Fills an n x k matrix of i.i.d. offsets with entrywise variance sigma^2.
template <typename Scalar = double>
Matrix<Scalar> draw_perturbations(const PerturbationSpec& spec, PerturbationStream& stream,
                                  double sigma) {
  spec.validate();
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw ConfigError("perturbation sigma must be positive and finite");
  const std::uint64_t draw_seed = stream.advance();
  Matrix<Scalar> omega(spec.dimension, spec.particle_count);
  for (Index c = 0; c < spec.particle_count; ++c) {
    std::mt19937_64 engine(mix_seed(draw_seed, static_cast<std::uint64_t>(c)));
    if (spec.distribution == Distribution::Gaussian) {
      std::normal_distribution<double> normal(0.0, 1.0);
      for (Index r = 0; r < spec.dimension; ++r)
        omega(r, c) = static_cast<Scalar>(sigma * normal(engine));
    } else {
      for (Index r = 0; r < spec.dimension; ++r)
        omega(r, c) = static_cast<Scalar>((engine() >> 63) ? sigma : -sigma);
    }
  }
  return omega;
}

template <typename Scalar = double>
Matrix<Scalar> draw_perturbations(const PerturbationSpec& spec, PerturbationStream& stream) {
  return draw_perturbations<Scalar>(spec, stream, spec.sigma);
}

template <typename Scalar>
struct Moments {
  Vector<Scalar> mean;
  /// Uncentered second moment (1/k) Omega Omega^T.
  Matrix<Scalar> covariance;
};

template <typename Derived>
Moments<typename Derived::Scalar> empirical_moments(const Eigen::MatrixBase<Derived>& omega) {
  using Scalar = typename Derived::Scalar;
  require_shape(omega.rows() > 0 && omega.cols() > 0, "empirical_moments: empty matrix");
  const Scalar inv_k = Scalar(1) / static_cast<Scalar>(omega.cols());
  Moments<Scalar> m;
  m.mean = omega.rowwise().sum() * inv_k;
  m.covariance = (omega * omega.transpose()) * inv_k;
  return m;
}

}  // namespace enkf

#endif  // ENKF_PERTURBATION_HPP
