#pragma once

#include "countmix/types.hpp"

#include <cmath>
#include <limits>

namespace countmix {

template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const Scalar m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

/// Symmetrized Jacobian of an analytic gradient by central differences,
/// with per-coordinate step rel_step * (1 + |theta_j|).
template <typename GradFn>
Matrix symmetric_jacobian(GradFn&& grad, const Vector& theta, double rel_step) {
  const Eigen::Index k = theta.size();
  Matrix J(k, k);
  Vector probe = theta;
  for (Eigen::Index j = 0; j < k; ++j) {
    const double h = rel_step * (1.0 + std::abs(theta[j]));
    probe[j] = theta[j] + h;
    const Vector up = grad(probe);
    probe[j] = theta[j] - h;
    const Vector down = grad(probe);
    probe[j] = theta[j];
    J.col(j) = (up - down) / (2.0 * h);
  }
  return (J + J.transpose()) / 2.0;
}

}  // namespace countmix
