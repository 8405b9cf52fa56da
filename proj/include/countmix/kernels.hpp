#pragma once

// Per-observation log-pmf kernels and their derivatives, on the log-link
// scale eta = x'beta. Templated on the scalar so tests can cross-check in
// long double.

#include <boost/math/special_functions/digamma.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <type_traits>
#include <vector>

namespace countmix::kernels {

namespace detail {

inline constexpr std::size_t kFactorialTable = 1024;

inline const std::array<double, kFactorialTable>& log_factorial_table() {
  static const auto table = [] {
    std::array<double, kFactorialTable> t{};
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = std::lgamma(static_cast<double>(k) + 1.0);
    return t;
  }();
  return table;
}

}  // namespace detail

template <typename Scalar>
Scalar log_factorial(Scalar y) {
  using std::lgamma;
  if constexpr (std::is_same_v<Scalar, double>) {
    // Counts are integers; small ones come from a table.
    if (y >= 0 && y < static_cast<double>(detail::kFactorialTable) && y == std::floor(y))
      return detail::log_factorial_table()[static_cast<std::size_t>(y)];
  }
  return lgamma(y + Scalar(1));
}

template <typename Scalar>
Scalar poisson_logpmf(Scalar y, Scalar eta) {
  using std::exp;
  return y * eta - exp(eta) - log_factorial(y);
}

// d/d eta of poisson_logpmf.
template <typename Scalar>
Scalar poisson_score(Scalar y, Scalar eta) {
  using std::exp;
  return y - exp(eta);
}

namespace detail {

// Counts up to this size use the exact finite product for the Gamma ratio.
inline constexpr double kExactRatioCount = 1000;

template <typename Scalar>
bool use_finite_product(Scalar y, Scalar r) {
  return y <= Scalar(kExactRatioCount) || (r > Scalar(1000) * y && y <= Scalar(1e6));
}

// log1p(x) - x/(1+x), which is ~x^2/2 for small x.
template <typename Scalar>
Scalar log1p_minus_ratio(Scalar x) {
  using std::log1p;
  if (x < Scalar(1e-3)) {
    Scalar term = x * x;
    Scalar sum = 0;
    for (int k = 2; k < 10; ++k) {
      sum += (k % 2 == 0 ? Scalar(1) : Scalar(-1)) * Scalar(k - 1) / Scalar(k) * term;
      term *= x;
    }
    return sum;
  }
  return log1p(x) - x / (Scalar(1) + x);
}

}  // namespace detail

/// lgamma(y + r) - lgamma(r) - y*log(r) for integer y >= 0 and r > 0.
///
/// This is the part of the NB-2 log-pmf that vanishes as r = 1/alpha grows;
/// evaluating it as a finite sum of log1p terms avoids the catastrophic
/// cancellation of two huge lgamma values near the Poisson limit.
template <typename Scalar>
Scalar nb2_gamma_ratio(Scalar y, Scalar r) {
  using std::lgamma;
  using std::log;
  using std::log1p;
  if (detail::use_finite_product(y, r)) {
    Scalar sum = 0;
    const long count = static_cast<long>(y);
    for (long k = 1; k < count; ++k) sum += log1p(Scalar(k) / r);
    return sum;
  }
  return lgamma(y + r) - lgamma(r) - y * log(r);
}

/// d/d alpha of nb2_gamma_ratio(y, 1/alpha).
template <typename Scalar>
Scalar nb2_gamma_ratio_dalpha(Scalar y, Scalar alpha) {
  const Scalar r = Scalar(1) / alpha;
  if (detail::use_finite_product(y, r)) {
    Scalar sum = 0;
    const long count = static_cast<long>(y);
    for (long k = 1; k < count; ++k) sum += Scalar(k) / (Scalar(1) + alpha * Scalar(k));
    return sum;
  }
  using boost::math::digamma;
  return -r * r * (digamma(y + r) - digamma(r) - y / r);
}

/// NB-2 log-pmf given the precomputed nb2_gamma_ratio(y, 1/alpha).
template <typename Scalar>
Scalar nb2_logpmf_with_ratio(Scalar y, Scalar eta, Scalar alpha, Scalar ratio) {
  using std::exp;
  using std::log1p;
  const Scalar mu = exp(eta);
  const Scalar r = Scalar(1) / alpha;
  return ratio + y * eta - (y + r) * log1p(alpha * mu) - log_factorial(y);
}

/// NB-2 log-pmf with mean mu = exp(eta) and variance mu(1 + alpha mu).
template <typename Scalar>
Scalar nb2_logpmf(Scalar y, Scalar eta, Scalar alpha) {
  return nb2_logpmf_with_ratio(y, eta, alpha, nb2_gamma_ratio(y, Scalar(1) / alpha));
}

/// nb2_gamma_ratio and nb2_gamma_ratio_dalpha for every count up to max_y at
/// one alpha, as running sums. Rows that share a count share the work; the
/// values are identical to the per-row kernels.
class Nb2CountTable {
 public:
  Nb2CountTable(double alpha, double max_y, bool with_dalpha = false) : alpha_(alpha) {
    const double r = 1.0 / alpha;
    const auto top = static_cast<std::size_t>(std::clamp(max_y, 0.0, detail::kExactRatioCount));
    ratio_.assign(top + 1, 0.0);
    for (std::size_t y = 2; y <= top; ++y)
      ratio_[y] = ratio_[y - 1] + std::log1p(static_cast<double>(y - 1) / r);
    if (with_dalpha) {
      dratio_.assign(top + 1, 0.0);
      for (std::size_t y = 2; y <= top; ++y) {
        const auto k = static_cast<double>(y - 1);
        dratio_[y] = dratio_[y - 1] + k / (1.0 + alpha * k);
      }
    }
  }

  double ratio(double y) const {
    if (in_table(y, ratio_.size())) return ratio_[static_cast<std::size_t>(y)];
    return nb2_gamma_ratio(y, 1.0 / alpha_);
  }

  double dratio(double y) const {
    if (in_table(y, dratio_.size())) return dratio_[static_cast<std::size_t>(y)];
    return nb2_gamma_ratio_dalpha(y, alpha_);
  }

 private:
  static bool in_table(double y, std::size_t size) {
    return y >= 0 && y < static_cast<double>(size) && y == std::floor(y);
  }

  double alpha_;
  std::vector<double> ratio_;
  std::vector<double> dratio_;
};

// d/d eta.
template <typename Scalar>
Scalar nb2_score(Scalar y, Scalar eta, Scalar alpha) {
  using std::exp;
  const Scalar mu = exp(eta);
  return (y - mu) / (Scalar(1) + alpha * mu);
}

// d^2/d eta^2; always negative, so the beta-block is concave for fixed alpha.
template <typename Scalar>
Scalar nb2_curvature(Scalar y, Scalar eta, Scalar alpha) {
  using std::exp;
  const Scalar mu = exp(eta);
  const Scalar denom = Scalar(1) + alpha * mu;
  return -mu * (Scalar(1) + alpha * y) / (denom * denom);
}

// The terms of d/d alpha that involve the mean.
template <typename Scalar>
Scalar nb2_dalpha_mean_part(Scalar y, Scalar mu, Scalar alpha) {
  const Scalar x = alpha * mu;
  const Scalar r = Scalar(1) / alpha;
  return r * r * detail::log1p_minus_ratio(x) - y * mu / (Scalar(1) + x);
}

// d/d alpha.
template <typename Scalar>
Scalar nb2_dalpha(Scalar y, Scalar eta, Scalar alpha) {
  using std::exp;
  return nb2_gamma_ratio_dalpha(y, alpha) + nb2_dalpha_mean_part(y, Scalar(exp(eta)), alpha);
}

}  // namespace countmix::kernels
