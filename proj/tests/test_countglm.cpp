#include "countmix/countglm.hpp"
#include "countmix/errors.hpp"
#include "countmix/kernels.hpp"
#include "countmix/rng.hpp"
#include "countmix/simulate.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

using namespace countmix;

namespace {

Dataset single_row(double y, double x) {
  Vector yy(1);
  yy << y;
  return make_dataset(yy, Matrix::Constant(1, 1, x), {"x"});
}

Dataset poisson_regression(Eigen::Index n, double b0, double b1, std::uint64_t seed) {
  MixtureSpec spec;
  Vector beta(2);
  beta << b0, b1;
  spec.components = {{1.0, beta, 0.0}};
  spec.covariates = {{"x", CovariateDist::Kind::Normal, 0.0, 1.0}};
  return gen_regression_mixture(spec, n, seed).data;
}

Dataset intercept_only(const std::vector<double>& ys) {
  Vector y = Eigen::Map<const Vector>(ys.data(), static_cast<Eigen::Index>(ys.size()));
  return make_dataset(y, Matrix::Zero(y.size(), 0), {});
}

}  // namespace

TEST_CASE("poisson_loglik small cases") {
  Vector zero = Vector::Zero(2);
  CHECK(poisson_loglik(zero, single_row(0, 3.7)) == doctest::Approx(-1.0).epsilon(1e-15));

  Vector beta(2);
  beta << std::log(2.0), 0.0;
  CHECK(poisson_loglik(beta, single_row(2, 1.0)) ==
        doctest::Approx(-1.30685281944005469).epsilon(1e-14));
}

TEST_CASE("poisson_loglik matches the log of the pmf product") {
  const Dataset d = poisson_regression(25, 0.8, 0.4, 3);
  Vector beta(2);
  beta << 0.7, 0.5;
  long double prod_log = 0;
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    const long double mu = std::exp(static_cast<long double>(d.X.row(i).dot(beta)));
    prod_log += std::log(oracle::poisson_pmf(static_cast<int>(d.y[i]), mu));
  }
  CHECK(poisson_loglik(beta, d) == doctest::Approx(static_cast<double>(prod_log)).epsilon(1e-12));

  Vector w = Vector::Constant(d.n(), 0.5);
  CHECK(poisson_loglik(beta, d, w) ==
        doctest::Approx(static_cast<double>(prod_log) / 2).epsilon(1e-12));
}

TEST_CASE("nb2_loglik") {
  SUBCASE("y = 0 reduces to the zero-count term") {
    Vector beta(2);
    beta << 1.3, 0.0;
    const double mu = std::exp(1.3);
    const double a = 0.7;
    CHECK(nb2_loglik(beta, a, single_row(0, 2.0)) ==
          doctest::Approx(-(1 / a) * std::log1p(a * mu)).epsilon(1e-14));
  }
  SUBCASE("y = 3, mu = 2, alpha = 0.5 against the Gamma-function pmf") {
    Vector beta(2);
    beta << std::log(2.0), 0.0;
    const double frozen = -2.07944154167983592825;
    CHECK(nb2_loglik(beta, 0.5, single_row(3, 1.0)) == doctest::Approx(frozen).epsilon(1e-14));
    CHECK(static_cast<double>(std::log(oracle::nb2_pmf(3, 2.0L, 0.5L))) ==
          doctest::Approx(frozen).epsilon(1e-14));
  }
  SUBCASE("Poisson limit") {
    const Dataset d = poisson_regression(40, 1.5, 0.3, 11);
    Vector beta(2);
    beta << 1.4, 0.35;
    CHECK(std::abs(nb2_loglik(beta, 1e-10, d) - poisson_loglik(beta, d)) < 1e-4);
  }
  SUBCASE("non-positive alpha is a domain error") {
    CHECK_THROWS_AS(nb2_loglik(Vector::Zero(2), 0.0, single_row(1, 1)), DomainError);
    CHECK_THROWS_AS(nb2_loglik(Vector::Zero(2), -1.0, single_row(1, 1)), DomainError);
  }
  SUBCASE("large counts stay finite and agree with lgamma") {
    for (double y : {1500.0, 6408.0})
      for (double a : {0.01, 0.5, 3.0}) {
        const double eta = std::log(y * 0.9);
        const double r = 1 / a;
        const double direct = std::lgamma(y + r) - std::lgamma(r) - std::lgamma(y + 1) +
                              y * std::log(a * std::exp(eta) / (1 + a * std::exp(eta))) -
                              r * std::log1p(a * std::exp(eta));
        CHECK(kernels::nb2_logpmf(y, eta, a) == doctest::Approx(direct).epsilon(1e-10));
      }
  }
}

TEST_CASE("kernels agree in double and long double") {
  for (double y : {0.0, 1.0, 7.0, 40.0})
    for (double a : {1e-6, 0.2, 2.0}) {
      const double eta = 1.1;
      CHECK(kernels::nb2_logpmf(y, eta, a) ==
            doctest::Approx(static_cast<double>(kernels::nb2_logpmf<long double>(y, eta, a))).epsilon(1e-13));
      CHECK(kernels::nb2_dalpha(y, eta, a) ==
            doctest::Approx(static_cast<double>(kernels::nb2_dalpha<long double>(y, eta, a))).epsilon(1e-9));
    }
}

TEST_CASE("analytic gradients match central differences") {
  auto rng = make_rng(2024);
  boost::random::uniform_real_distribution<double> u(-0.5, 0.5);
  boost::random::uniform_real_distribution<double> ua(0.05, 2.0);
  const Dataset d = poisson_regression(30, 1.0, 0.5, 5);
  for (int trial = 0; trial < 10; ++trial) {
    Vector beta(2);
    beta << 1.0 + u(rng), 0.5 + u(rng);
    const double alpha = ua(rng);
    const Vector gp = poisson_gradient(beta, d);
    const Vector gn = nb2_gradient(beta, alpha, d);
    for (Eigen::Index j = 0; j < 3; ++j) {
      const double h = 1e-6 * (1 + std::abs(j < 2 ? beta[j] : alpha));
      Vector bp = beta, bm = beta;
      double ap = alpha, am = alpha;
      if (j < 2) {
        bp[j] += h;
        bm[j] -= h;
        const double fd = (poisson_loglik(bp, d) - poisson_loglik(bm, d)) / (2 * h);
        CHECK(std::abs(fd - gp[j]) / std::max(1.0, std::abs(gp[j])) < 1e-5);
      } else {
        ap += h;
        am -= h;
      }
      const double fd = (nb2_loglik(bp, ap, d) - nb2_loglik(bm, am, d)) / (2 * h);
      CHECK(std::abs(fd - gn[j]) / std::max(1.0, std::abs(gn[j])) < 1e-5);
    }
  }
}

TEST_CASE("fit_poisson") {
  SUBCASE("intercept-only MLE is the log mean") {
    const GlmFit fit = fit_poisson(intercept_only({1, 2, 3}));
    CHECK(fit.converged);
    CHECK(fit.beta[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(fit.alpha == 0);
    // se = 1/sqrt(n * mean)
    CHECK(fit.se[0] == doctest::Approx(1 / std::sqrt(6.0)).epsilon(1e-10));
  }
  SUBCASE("recovers the generating coefficients") {
    const Dataset d = poisson_regression(2000, 1.0, 0.5, 17);
    const GlmFit fit = fit_poisson(d);
    CHECK(fit.converged);
    CHECK(std::abs(fit.beta[0] - 1.0) < 3 * fit.se[0]);
    CHECK(std::abs(fit.beta[1] - 0.5) < 3 * fit.se[1]);
    CHECK(poisson_gradient(fit.beta, d).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("column permutation permutes the coefficients") {
    MixtureSpec spec;
    Vector beta(3);
    beta << 0.5, 0.3, -0.2;
    spec.components = {{1.0, beta, 0.0}};
    spec.covariates = {{"a", CovariateDist::Kind::Normal, 0, 1}, {"b", CovariateDist::Kind::Uniform, 0, 2}};
    const Dataset d = gen_regression_mixture(spec, 300, 8).data;
    Dataset swapped = d;
    swapped.X.col(1) = d.X.col(2);
    swapped.X.col(2) = d.X.col(1);
    const GlmFit f1 = fit_poisson(d);
    const GlmFit f2 = fit_poisson(swapped);
    CHECK(f1.logL == doctest::Approx(f2.logL).epsilon(1e-12));
    CHECK(f1.beta[1] == doctest::Approx(f2.beta[2]).epsilon(1e-8));
    CHECK(f1.beta[2] == doctest::Approx(f2.beta[1]).epsilon(1e-8));
  }
  SUBCASE("unit weights equal the unweighted fit") {
    const Dataset d = poisson_regression(200, 0.3, 0.8, 4);
    const GlmFit a = fit_poisson(d);
    const GlmFit b = fit_poisson(d, Vector::Ones(d.n()));
    CHECK((a.beta - b.beta).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(std::abs(a.logL - b.logL) < 1e-10);
  }
  SUBCASE("rank deficiency names the dependent column") {
    Matrix x(6, 2);
    x << 1, 2, 2, 4, 3, 6, 4, 8, 5, 10, 6, 12;
    Vector y(6);
    y << 1, 2, 3, 2, 5, 4;
    CHECK_THROWS_WITH_AS(fit_poisson(make_dataset(y, x, {"a", "twice_a"})),
                         doctest::Contains("dependent columns"), SingularDesignError);
  }
  SUBCASE("zero-weight rows are excluded from the rank check") {
    Matrix x(5, 1);
    x << 1, 1, 1, 2, 3;
    Vector y(5);
    y << 1, 2, 3, 4, 5;
    Vector w(5);
    w << 1, 1, 1, 0, 0;
    CHECK_THROWS_AS(fit_poisson(make_dataset(y, x, {"x"}), w), SingularDesignError);
  }
  SUBCASE("non-convergence returns the best iterate") {
    GlmOptions opt;
    opt.max_iter = 1;
    const GlmFit fit = fit_poisson(poisson_regression(100, 2.0, 1.0, 9), Vector(), Vector(), opt);
    CHECK_FALSE(fit.converged);
    CHECK(std::isfinite(fit.logL));
  }
}

TEST_CASE("fit_nb2") {
  SUBCASE("Poisson data gives a small dispersion") {
    const GlmFit fit = fit_nb2(poisson_regression(1000, 1.5, 0.4, 21));
    CHECK(fit.alpha <= 1e-2);
  }
  SUBCASE("intercept-only alpha = 1 recovery") {
    MixtureSpec spec;
    Vector beta(1);
    beta << std::log(5.0);
    spec.components = {{1.0, beta, 1.0}};
    const Dataset d = gen_regression_mixture(spec, 5000, 31).data;
    const GlmFit fit = fit_nb2(d);
    CHECK(fit.converged);
    CHECK(fit.alpha >= 0.7);
    CHECK(fit.alpha <= 1.3);
    // Method-of-moments cross-check: var = mu + alpha mu^2.
    const double m = d.y.mean();
    const double v = (d.y.array() - m).square().sum() / (d.n() - 1);
    CHECK(std::abs((v - m) / (m * m) - fit.alpha) < 0.2);
    CHECK(fit.se.allFinite());
  }
  SUBCASE("NB-2 never fits worse than Poisson") {
    for (std::uint64_t seed : {1, 2, 3}) {
      const Dataset d = poisson_regression(300, 1.0, 0.3, seed);
      CHECK(fit_nb2(d).logL >= fit_poisson(d).logL - 1e-8);
    }
  }
  SUBCASE("too few rows") {
    CHECK_THROWS_AS(fit_nb2(intercept_only({3})), DimensionError);
  }
}

TEST_CASE("dispersion_stat") {
  CHECK(dispersion_stat(intercept_only({4, 4, 4})) == 0);
  CHECK(std::isinf(dispersion_stat(intercept_only({0, 0, 0}))));
  Vector y(1000);
  auto rng = make_rng(77);
  boost::random::poisson_distribution<int, double> pois(9.0);
  for (auto& v : y) v = pois(rng);
  const double ratio = dispersion_stat(make_dataset(y, Matrix::Zero(1000, 0), {}));
  CHECK(ratio > 0.8);
  CHECK(ratio < 1.2);
  // 512000 / 166.45
  CHECK(512000.0 / 166.45 == doctest::Approx(3076).epsilon(1e-3));
  CHECK_THROWS_AS(dispersion_stat(intercept_only({1})), DimensionError);
}

TEST_CASE("overflowing linear predictor reports the row") {
  Vector beta(2);
  beta << 0, 800;
  Matrix x(3, 1);
  x << 0, 0, 1;
  try {
    poisson_loglik(beta, make_dataset(Vector::Ones(3), x, {"x"}));
    FAIL("expected OverflowError");
  } catch (const OverflowError& e) {
    CHECK(e.row == 2);
  }
}
