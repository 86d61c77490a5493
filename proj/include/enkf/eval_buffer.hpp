#ifndef ENKF_EVAL_BUFFER_HPP
#define ENKF_EVAL_BUFFER_HPP

#include "enkf/common.hpp"

#include <deque>

namespace enkf {

/// Bounded history of (omega, q) column pairs, evicted oldest-first.
template <typename Scalar = double>
class EvalBuffer {
public:
  explicit EvalBuffer(Index capacity) : capacity_(capacity) {
    if (capacity_ < 1) throw ConfigError("memory buffer capacity must be positive");
  }

  Index capacity() const { return capacity_; }
  Index size() const { return static_cast<Index>(omega_.size()); }
  bool empty() const { return omega_.empty(); }

  template <typename D1, typename D2>
  void push(const Eigen::MatrixBase<D1>& omega, const Eigen::MatrixBase<D2>& q) {
    require_shape(omega.cols() == q.cols(), "EvalBuffer::push: Omega and Q column counts differ");
    if (!empty())
      require_shape(omega.rows() == omega_.front().size() && q.rows() == q_.front().size(),
                    "EvalBuffer::push: column length changed");
    for (Index c = 0; c < omega.cols(); ++c) {
      omega_.emplace_back(omega.col(c));
      q_.emplace_back(q.col(c));
    }
    while (size() > capacity_) {
      omega_.pop_front();
      q_.pop_front();
    }
  }

  /// Stored columns in insertion order.
  Matrix<Scalar> omega() const { return stack(omega_); }
  Matrix<Scalar> q() const { return stack(q_); }

  void clear() {
    omega_.clear();
    q_.clear();
  }

private:
  static Matrix<Scalar> stack(const std::deque<Vector<Scalar>>& cols) {
    if (cols.empty()) return {};
    Matrix<Scalar> out(cols.front().size(), static_cast<Index>(cols.size()));
    Index c = 0;
    for (const auto& v : cols) out.col(c++) = v;
    return out;
  }

  Index capacity_;
  std::deque<Vector<Scalar>> omega_;
  std::deque<Vector<Scalar>> q_;
};

}  // namespace enkf

#endif  // ENKF_EVAL_BUFFER_HPP
