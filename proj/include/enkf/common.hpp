#ifndef ENKF_COMMON_HPP
#define ENKF_COMMON_HPP

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace enkf {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using VectorXd = Eigen::VectorXd;
using MatrixXd = Eigen::MatrixXd;

/// Data indices selecting examples (rows of a regression problem, images of
/// a classification set). An empty set means "all data".
using IndexSet = std::vector<Index>;
using IndexSpan = std::span<const Index>;

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration (bad sizes, unknown keys, unparsable files).
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Operand dimensions do not agree.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// Non-finite value encountered or a numerical routine broke down.
class NumericError : public Error {
public:
  using Error::Error;
};

/// Operation requested from a model that does not provide it.
class CapabilityError : public Error {
public:
  using Error::Error;
};

/// Learning-rate schedule queried outside its domain.
class ScheduleError : public Error {
public:
  using Error::Error;
};

/// SPD factorization failed even after regularization escalation.
class ConditioningError : public NumericError {
public:
  using NumericError::NumericError;
};

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& x) {
  return x.allFinite();
}

/// SplitMix64 finalizer; used to derive independent seeds from (seed, index)
/// pairs so that streams never depend on evaluation order.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace enkf

#endif  // ENKF_COMMON_HPP
