#include "countmix/countglm.hpp"

#include "countmix/errors.hpp"
#include "countmix/kernels.hpp"
#include "countmix/numeric.hpp"

#include <boost/math/tools/toms748_solve.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace countmix {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kRankWeightFloor = 1e-10;

double weight_at(const Vector& w, Eigen::Index i) { return w.size() ? w[i] : 1.0; }

void check_inputs(const Vector& beta, const Dataset& d, const Vector& w) {
  if (beta.size() != d.X.cols())
    throw DimensionError("coefficient vector has length " + std::to_string(beta.size()) +
                         ", design has " + std::to_string(d.X.cols()) + " columns");
  if (w.size() != 0 && w.size() != d.n())
    throw DimensionError("weight vector length does not match the number of rows");
}

void check_weights(const Vector& w) {
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (!(w[i] >= 0.0 && w[i] <= 1.0))
      throw InputError("weights must lie in [0, 1] (row " + std::to_string(i) + ")");
}

// eta = X beta with an overflow check on exp(eta).
Vector linear_predictor(const Vector& beta, const Dataset& d) {
  Vector eta = d.X * beta;
  for (Eigen::Index i = 0; i < eta.size(); ++i)
    if (!std::isfinite(eta[i]) || !std::isfinite(std::exp(eta[i])))
      throw OverflowError("linear predictor overflows", static_cast<std::size_t>(i));
  return eta;
}

// X' diag(c) X.
Matrix weighted_cross(const Matrix& X, const Vector& c) {
  return X.transpose() * (X.array().colwise() * c.array()).matrix();
}

Vector se_from_info(const Matrix& info, Eigen::Index k) {
  Eigen::LDLT<Matrix> ldlt(info);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      (ldlt.vectorD().array() <= 0).any())
    return Vector::Constant(k, kNaN);
  const Matrix cov = ldlt.solve(Matrix::Identity(info.rows(), info.cols()));
  Vector se(k);
  for (Eigen::Index j = 0; j < k; ++j) se[j] = cov(j, j) > 0 ? std::sqrt(cov(j, j)) : kNaN;
  return se;
}

// Weighted least squares of log(y + 0.5) on X, the usual GLM starting point.
Vector default_start(const Dataset& d, const Vector& w) {
  const Eigen::Index k = d.X.cols();
  Vector c(d.n());
  Vector z(d.n());
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    c[i] = weight_at(w, i) * (d.y[i] + 0.5);
    z[i] = std::log(d.y[i] + 0.5);
  }
  Eigen::LDLT<Matrix> ldlt(weighted_cross(d.X, c));
  Vector beta = Vector::Zero(k);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
    beta = ldlt.solve(d.X.transpose() * (c.array() * z.array()).matrix());
    if (beta.allFinite()) return beta;
  }
  const double total = w.size() ? w.sum() : static_cast<double>(d.n());
  const double ybar = (w.size() ? w.dot(d.y) : d.y.sum()) / std::max(total, 1e-300);
  beta.setZero();
  beta[0] = std::log(std::max(ybar, 1e-8));
  return beta;
}

double relative_change(double before, double after) {
  return std::abs(after - before) / std::max(1.0, std::abs(before));
}

// Newton direction; falls back to steepest ascent when the curvature matrix
// is not positive definite.
Vector newton_direction(const Matrix& info, const Vector& grad) {
  Eigen::LDLT<Matrix> ldlt(info);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
    Vector step = ldlt.solve(grad);
    if (step.allFinite()) return step;
  }
  return grad / std::max(1.0, info.diagonal().cwiseAbs().maxCoeff());
}

// Backtracking: halve the step until the objective does not decrease.
template <typename Objective>
bool line_search(Objective&& objective, Vector& beta, double& ll, const Vector& step,
                 int max_halvings) {
  double t = 1.0;
  for (int h = 0; h <= max_halvings; ++h, t *= 0.5) {
    Vector cand = beta + t * step;
    const double ll_c = objective(cand);
    if (std::isfinite(ll_c) && ll_c >= ll - 1e-12 * std::abs(ll)) {
      beta = std::move(cand);
      ll = ll_c;
      return true;
    }
  }
  return false;
}

}  // namespace

double poisson_loglik(const Vector& beta, const Dataset& d, const Vector& w) {
  check_inputs(beta, d, w);
  const Vector eta = linear_predictor(beta, d);
  double sum = 0;
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    const double wi = weight_at(w, i);
    if (wi == 0) continue;
    sum += wi * kernels::poisson_logpmf(d.y[i], eta[i]);
  }
  return sum;
}

Vector poisson_gradient(const Vector& beta, const Dataset& d, const Vector& w) {
  check_inputs(beta, d, w);
  const Vector eta = linear_predictor(beta, d);
  Vector s(d.n());
  for (Eigen::Index i = 0; i < d.n(); ++i) s[i] = weight_at(w, i) * kernels::poisson_score(d.y[i], eta[i]);
  return d.X.transpose() * s;
}

double nb2_loglik(const Vector& beta, double alpha, const Dataset& d, const Vector& w) {
  check_inputs(beta, d, w);
  if (!(alpha > 0) || !std::isfinite(alpha)) throw DomainError("NB-2 dispersion must be positive");
  const Vector eta = linear_predictor(beta, d);
  const kernels::Nb2CountTable table(alpha, d.n() ? d.y.maxCoeff() : 0.0);
  double sum = 0;
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    const double wi = weight_at(w, i);
    if (wi == 0) continue;
    const double term = kernels::nb2_logpmf_with_ratio(d.y[i], eta[i], alpha, table.ratio(d.y[i]));
    if (!std::isfinite(term)) throw OverflowError("NB-2 log-pmf is not finite", static_cast<std::size_t>(i));
    sum += wi * term;
  }
  return sum;
}

Vector nb2_gradient(const Vector& beta, double alpha, const Dataset& d, const Vector& w) {
  check_inputs(beta, d, w);
  if (!(alpha > 0) || !std::isfinite(alpha)) throw DomainError("NB-2 dispersion must be positive");
  const Vector eta = linear_predictor(beta, d);
  const Eigen::Index k = d.X.cols();
  const kernels::Nb2CountTable table(alpha, d.n() ? d.y.maxCoeff() : 0.0, true);
  Vector s(d.n());
  double ga = 0;
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    const double wi = weight_at(w, i);
    s[i] = wi * kernels::nb2_score(d.y[i], eta[i], alpha);
    if (wi != 0)
      ga += wi * (table.dratio(d.y[i]) +
                  kernels::nb2_dalpha_mean_part(d.y[i], std::exp(eta[i]), alpha));
  }
  Vector g(k + 1);
  g.head(k) = d.X.transpose() * s;
  g[k] = ga;
  return g;
}

void check_design_rank(const Dataset& d, const Vector& w) {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < d.n(); ++i)
    if (weight_at(w, i) > kRankWeightFloor) rows.push_back(i);
  const Eigen::Index k = d.X.cols();
  auto column_name = [&](Eigen::Index j) {
    return j == 0 ? std::string("intercept") : d.names[static_cast<std::size_t>(j - 1)];
  };
  if (static_cast<Eigen::Index>(rows.size()) < k)
    throw SingularDesignError("only " + std::to_string(rows.size()) +
                              " rows carry weight for " + std::to_string(k) + " coefficients");
  const Matrix sub = d.X(rows, Eigen::all);
  Eigen::ColPivHouseholderQR<Matrix> qr(sub);
  if (qr.rank() == k) return;
  std::string names;
  const auto& perm = qr.colsPermutation().indices();
  for (Eigen::Index r = qr.rank(); r < k; ++r) {
    if (!names.empty()) names += ", ";
    names += column_name(perm[r]);
  }
  throw SingularDesignError("design is rank deficient; dependent columns: " + names);
}

GlmFit fit_poisson(const Dataset& d, const Vector& w, const Vector& init, const GlmOptions& opt) {
  const Eigen::Index k = d.X.cols();
  if (w.size() != 0 && w.size() != d.n())
    throw DimensionError("weight vector length does not match the number of rows");
  check_weights(w);
  check_design_rank(d, w);

  auto objective = [&](const Vector& b) {
    try {
      return poisson_loglik(b, d, w);
    } catch (const OverflowError&) {
      return -kInf;
    }
  };

  Vector beta = init.size() == k ? init : default_start(d, w);
  double ll = objective(beta);
  if (!std::isfinite(ll)) {
    beta = default_start(d, w);
    ll = objective(beta);
  }
  if (!std::isfinite(ll)) throw OverflowError("Poisson fit cannot find a finite start", 0);

  GlmFit fit;
  fit.family = Family::Poisson;
  double change = kInf;
  int iter = 0;
  for (;; ++iter) {
    const Vector g = poisson_gradient(beta, d, w);
    if (change < opt.tol && g.cwiseAbs().maxCoeff() < opt.gtol) {
      fit.converged = true;
      break;
    }
    if (iter >= opt.max_iter) break;
    const Vector mu = (d.X * beta).array().exp();
    const Vector c = w.size() ? Vector(w.array() * mu.array()) : mu;
    const Vector step = newton_direction(weighted_cross(d.X, c), g);
    const double before = ll;
    if (!line_search(objective, beta, ll, step, opt.max_halvings)) {
      fit.converged = g.cwiseAbs().maxCoeff() < opt.gtol;
      break;
    }
    change = relative_change(before, ll);
  }

  fit.beta = beta;
  fit.logL = ll;
  fit.iterations = iter;
  fit.se = opt.standard_errors ? standard_errors(d, w, fit) : Vector::Constant(k, kNaN);
  return fit;
}

namespace {

struct AlphaUpdate {
  double alpha;
  bool at_bound;
};

// Maximizes the NB-2 log-likelihood over alpha for fixed beta by bracketing
// the root of the log-scale score and refining with TOMS 748.
AlphaUpdate update_alpha(const Dataset& d, const Vector& w, const Vector& beta, double alpha,
                         const GlmOptions& opt) {
  const Vector mu = (d.X * beta).array().exp();
  // Weighted tail counts W_k = sum of w_i over rows with y_i > k, so the
  // finite-sum part of the score costs O(max y) per evaluation.
  std::vector<double> tail;
  std::vector<Eigen::Index> large;  // rows handled term by term
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    const double wi = weight_at(w, i);
    if (wi == 0) continue;
    if (d.y[i] > kernels::detail::kExactRatioCount) {
      large.push_back(i);
      continue;
    }
    const auto yi = static_cast<std::size_t>(d.y[i]);
    if (tail.size() < yi) tail.resize(yi, 0.0);
    if (yi > 0) tail[yi - 1] += wi;
  }
  for (std::size_t k = tail.size(); k-- > 1;) tail[k - 1] += tail[k];
  auto score = [&](double t) {
    const double a = std::exp(t);
    double s = 0;
    for (std::size_t k = 1; k < tail.size(); ++k)
      s += tail[k] * static_cast<double>(k) / (1.0 + a * static_cast<double>(k));
    for (Eigen::Index i : large) s += weight_at(w, i) * kernels::nb2_gamma_ratio_dalpha(d.y[i], a);
    for (Eigen::Index i = 0; i < d.n(); ++i) {
      const double wi = weight_at(w, i);
      if (wi != 0) s += wi * kernels::nb2_dalpha_mean_part(d.y[i], mu[i], a);
    }
    return a * s;
  };
  const double lo = std::log(opt.alpha_min);
  const double hi = std::log(opt.alpha_max);
  const double t0 = std::clamp(std::log(alpha), lo, hi);
  const double s0 = score(t0);
  if (s0 == 0) return {std::exp(t0), t0 == lo || t0 == hi};

  const double dir = s0 > 0 ? 1.0 : -1.0;
  const double limit = s0 > 0 ? hi : lo;
  double a = t0;
  double sa = s0;
  double stride = 0.5;
  for (;;) {
    if (a == limit) return {std::exp(limit), true};
    const double b = dir > 0 ? std::min(a + stride, hi) : std::max(a - stride, lo);
    const double sb = score(b);
    if (sb == 0) return {std::exp(b), b == lo || b == hi};
    if ((sb > 0) != (sa > 0)) {
      boost::math::tools::eps_tolerance<double> tol(50);
      std::uintmax_t iters = 200;
      const double left = std::min(a, b);
      const double right = std::max(a, b);
      const double fl = left == a ? sa : sb;
      const double fr = left == a ? sb : sa;
      const auto root = boost::math::tools::toms748_solve(score, left, right, fl, fr, tol, iters);
      return {std::exp(0.5 * (root.first + root.second)), false};
    }
    a = b;
    sa = sb;
    stride *= 2.0;
  }
}

}  // namespace

GlmFit fit_nb2(const Dataset& d, const Vector& w, const Nb2Start& init, const GlmOptions& opt) {
  const Eigen::Index k = d.X.cols();
  if (w.size() != 0 && w.size() != d.n())
    throw DimensionError("weight vector length does not match the number of rows");
  check_weights(w);
  if (d.n() < k + 1) throw DimensionError("NB-2 fit needs at least p+2 rows");
  check_design_rank(d, w);

  Vector beta = init.beta.size() == k ? init.beta : fit_poisson(d, w, Vector(), opt).beta;
  double alpha = init.alpha;
  if (!(alpha > 0)) {
    const Vector mu = (d.X * beta).array().exp();
    double num = 0;
    double den = 0;
    for (Eigen::Index i = 0; i < d.n(); ++i) {
      const double wi = weight_at(w, i);
      num += wi * ((d.y[i] - mu[i]) * (d.y[i] - mu[i]) - mu[i]);
      den += wi * mu[i] * mu[i];
    }
    alpha = den > 0 ? num / den : 0.1;
    alpha = std::clamp(std::isfinite(alpha) ? alpha : 0.1, 0.01, 10.0);
  }
  alpha = std::clamp(alpha, opt.alpha_min, opt.alpha_max);

  auto objective_at = [&](double a) {
    return [&, a](const Vector& b) {
      try {
        return nb2_loglik(b, a, d, w);
      } catch (const OverflowError&) {
        return -kInf;
      }
    };
  };

  double ll = objective_at(alpha)(beta);
  if (!std::isfinite(ll)) {
    beta = fit_poisson(d, w, Vector(), opt).beta;
    ll = objective_at(alpha)(beta);
  }
  if (!std::isfinite(ll)) throw OverflowError("NB-2 fit cannot find a finite start", 0);

  GlmFit fit;
  fit.family = Family::NB2;
  bool at_bound = false;
  double change = kInf;
  int iter = 0;
  for (;; ++iter) {
    const Vector g = nb2_gradient(beta, alpha, d, w);
    const double gmax_beta = g.head(k).cwiseAbs().maxCoeff();
    const double g_log_alpha = std::abs(alpha * g[k]);
    if (change < opt.tol && gmax_beta < opt.gtol && (at_bound || g_log_alpha < opt.gtol)) {
      fit.converged = true;
      break;
    }
    if (iter >= opt.max_iter) break;
    const double before = ll;

    // Newton steps on beta with alpha held fixed.
    auto objective = objective_at(alpha);
    for (int inner = 0; inner < 3; ++inner) {
      const Vector gb = nb2_gradient(beta, alpha, d, w).head(k);
      if (gb.cwiseAbs().maxCoeff() < 0.1 * opt.gtol) break;
      const Vector eta = d.X * beta;
      Vector c(d.n());
      for (Eigen::Index i = 0; i < d.n(); ++i)
        c[i] = -weight_at(w, i) * kernels::nb2_curvature(d.y[i], eta[i], alpha);
      if (!line_search(objective, beta, ll, newton_direction(weighted_cross(d.X, c), gb),
                       opt.max_halvings))
        break;
    }

    // One-dimensional maximization over alpha; only accepted if it helps.
    const auto upd = update_alpha(d, w, beta, alpha, opt);
    const double ll_new = objective_at(upd.alpha)(beta);
    if (std::isfinite(ll_new) && ll_new >= ll) {
      alpha = upd.alpha;
      ll = ll_new;
      at_bound = upd.at_bound;
    }
    change = relative_change(before, ll);
  }

  fit.beta = beta;
  fit.alpha = alpha;
  fit.logL = ll;
  fit.iterations = iter;
  fit.alpha_at_bound = at_bound || alpha <= opt.alpha_min * (1 + 1e-9) ||
                       alpha >= opt.alpha_max * (1 - 1e-9);

  // Pinned at the lower bound: report the alpha -> 0 limit, which is the Poisson fit.
  if (fit.alpha_at_bound && alpha <= opt.alpha_min * (1 + 1e-9)) {
    const GlmFit pois = fit_poisson(d, w, beta, opt);
    if (pois.logL > fit.logL) {
      beta = pois.beta;
      fit.beta = beta;
      fit.logL = pois.logL;
    }
  }

  fit.se = opt.standard_errors ? standard_errors(d, w, fit) : Vector::Constant(k, kNaN);
  return fit;
}

Vector standard_errors(const Dataset& d, const Vector& w, const GlmFit& fit) {
  const Eigen::Index k = d.X.cols();
  const Vector& beta = fit.beta;
  const Vector eta = d.X * beta;
  if (fit.family == Family::Poisson) {
    const Vector mu = eta.array().exp();
    const Vector c = w.size() ? Vector(w.array() * mu.array()) : mu;
    return se_from_info(weighted_cross(d.X, c), k);
  }
  const double alpha = fit.alpha;
  Vector c(d.n());
  for (Eigen::Index i = 0; i < d.n(); ++i)
    c[i] = -weight_at(w, i) * kernels::nb2_curvature(d.y[i], eta[i], alpha);
  Vector se = Vector::Constant(k, kNaN);
  if (!fit.alpha_at_bound) {
    // Observed information over (beta, log alpha) from the analytic score.
    Vector theta(k + 1);
    theta.head(k) = beta;
    theta[k] = std::log(alpha);
    auto grad = [&](const Vector& t) {
      Vector g = nb2_gradient(t.head(k), std::exp(t[k]), d, w);
      g[k] *= std::exp(t[k]);
      return g;
    };
    try {
      const Matrix info = -symmetric_jacobian(grad, theta, 1e-5);
      se = se_from_info(info, k);
    } catch (const ComputeError&) {
    }
  }
  if (!se.allFinite()) se = se_from_info(weighted_cross(d.X, c), k);
  return se;
}

double dispersion_stat(const Dataset& d) {
  if (d.n() < 2) throw DimensionError("dispersion needs at least two observations");
  const double mean = d.y.mean();
  if (mean == 0) return kInf;
  const double var = (d.y.array() - mean).square().sum() / static_cast<double>(d.n() - 1);
  return var / mean;
}

}  // namespace countmix
