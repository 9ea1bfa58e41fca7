#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace ram {

/// Errors raised on contract violations. The message is the stable part of
/// the contract; callers and tests match on it.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

// Dense row-major storage; a row is one token / one vector.
using Matrix = MatrixX<double>;
using RowVector = RowVectorX<double>;

/// Column-wise mean of the rows of `rows` ([L x d] -> [d]).
template <typename Derived>
RowVectorX<typename Derived::Scalar> mean_pool(const Eigen::MatrixBase<Derived>& rows) {
  if (rows.rows() == 0) throw Error("empty sequence");
  return rows.colwise().sum() / static_cast<typename Derived::Scalar>(rows.rows());
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine(const Eigen::MatrixBase<DerivedA>& u,
                                 const Eigen::MatrixBase<DerivedB>& v) {
  using Scalar = typename DerivedA::Scalar;
  const Scalar nu = u.norm();
  const Scalar nv = v.norm();
  if (!(nu > Scalar(0)) || !(nv > Scalar(0))) throw Error("degenerate vector");
  const Scalar c = u.cwiseProduct(v).sum() / (nu * nv);
  return std::clamp(c, Scalar(-1), Scalar(1));
}

/// Temperature softmax over a vector, max-subtracted.
template <typename Derived>
RowVectorX<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits,
                                             typename Derived::Scalar temperature = 1) {
  using Scalar = typename Derived::Scalar;
  if (!(temperature > Scalar(0))) throw Error("invalid temperature");
  if (logits.size() == 0) throw Error("empty sequence");
  RowVectorX<Scalar> z = logits.reshaped().transpose() / temperature;
  z.array() -= z.maxCoeff();
  z = z.array().exp();
  return z / z.sum();
}

/// log(sum(exp(x))) computed with max subtraction.
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& x) {
  const auto m = x.maxCoeff();
  return m + std::log((x.array() - m).exp().sum());
}

}  // namespace ram
