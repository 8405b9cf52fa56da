#include "countmix/errors.hpp"
#include "countmix/mixture.hpp"
#include "countmix/rng.hpp"
#include "countmix/simulate.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <boost/random/poisson_distribution.hpp>

#include <algorithm>
#include <array>

using namespace countmix;

namespace {

Dataset toy() {
  Vector y(5);
  y << 0, 3, 7, 1, 12;
  Matrix x(5, 1);
  x << 0.2, -0.5, 1.1, 0.0, 1.7;
  return make_dataset(y, x, {"x"});
}

ComponentParams comp(double pi, double b0, double b1, double alpha = 0) {
  ComponentParams c;
  c.pi = pi;
  c.beta = Vector(2);
  c.beta << b0, b1;
  c.alpha = alpha;
  c.active = {true, true};
  return c;
}

// Two well-separated Poisson regressions.
SimResult separated(Eigen::Index n, std::uint64_t seed) {
  MixtureSpec spec;
  Vector b1(2), b2(2);
  b1 << 0.5, 0.3;
  b2 << 3.0, -0.2;
  spec.components = {{0.4, b1, 0.0}, {0.6, b2, 0.0}};
  spec.covariates = {{"x", CovariateDist::Kind::Normal, 0, 1}};
  return gen_regression_mixture(spec, n, seed);
}

}  // namespace

TEST_CASE("mixture_loglik") {
  const Dataset d = toy();
  SUBCASE("G=1 is the single-component loglik") {
    const std::array<ComponentParams, 1> one{comp(1.0, 0.8, 0.6)};
    CHECK(mixture_loglik(one, d, Family::Poisson) == poisson_loglik(one[0].beta, d));
    const std::array<ComponentParams, 1> nb{comp(1.0, 0.8, 0.6, 0.4)};
    CHECK(mixture_loglik(nb, d, Family::NB2) == nb2_loglik(nb[0].beta, 0.4, d));
  }
  SUBCASE("identical components collapse to G=1") {
    const std::array<ComponentParams, 2> two{comp(0.3, 0.8, 0.6), comp(0.7, 0.8, 0.6)};
    CHECK(mixture_loglik(two, d, Family::Poisson) ==
          doctest::Approx(poisson_loglik(two[0].beta, d)).epsilon(1e-13));
  }
  SUBCASE("termwise pmf oracle") {
    const std::array<ComponentParams, 2> two{comp(0.35, 0.1, 0.4), comp(0.65, 1.9, 0.3)};
    long double pois = 0;
    long double nb = 0;
    for (Eigen::Index i = 0; i < d.n(); ++i) {
      const int y = static_cast<int>(d.y[i]);
      const long double m1 = std::exp(0.1L + 0.4L * d.X(i, 1));
      const long double m2 = std::exp(1.9L + 0.3L * d.X(i, 1));
      pois += std::log(0.35L * oracle::poisson_pmf(y, m1) + 0.65L * oracle::poisson_pmf(y, m2));
      nb += std::log(0.35L * oracle::nb2_pmf(y, m1, 0.5L) + 0.65L * oracle::nb2_pmf(y, m2, 1.5L));
    }
    CHECK(mixture_loglik(two, d, Family::Poisson) ==
          doctest::Approx(static_cast<double>(pois)).epsilon(1e-12));
    std::array<ComponentParams, 2> two_nb = two;
    two_nb[0].alpha = 0.5;
    two_nb[1].alpha = 1.5;
    CHECK(mixture_loglik(two_nb, d, Family::NB2) ==
          doctest::Approx(static_cast<double>(nb)).epsilon(1e-12));
  }
  SUBCASE("label permutation leaves the value unchanged") {
    std::array<ComponentParams, 3> c{comp(0.2, 0.1, 0.4), comp(0.5, 1.9, 0.3), comp(0.3, 1.0, -1.0)};
    const double ref = mixture_loglik(c, d, Family::Poisson);
    std::sort(c.begin(), c.end(), [](auto& a, auto& b) { return a.pi < b.pi; });
    do {
      CHECK(mixture_loglik(c, d, Family::Poisson) == doctest::Approx(ref).epsilon(1e-15));
    } while (std::next_permutation(c.begin(), c.end(), [](auto& a, auto& b) { return a.pi < b.pi; }));
  }
  SUBCASE("non-positive weight is a domain error") {
    const std::array<ComponentParams, 2> bad{comp(0.0, 0, 0), comp(1.0, 0, 0)};
    CHECK_THROWS_AS(mixture_loglik(bad, d, Family::Poisson), DomainError);
  }
}

TEST_CASE("e_step") {
  const Dataset d = toy();
  SUBCASE("G=1 gives ones") {
    const std::array<ComponentParams, 1> one{comp(1.0, 0.8, 0.6)};
    const Matrix r = e_step(one, d, Family::Poisson);
    CHECK((r.array() == 1.0).all());
  }
  SUBCASE("identical components split evenly") {
    const std::array<ComponentParams, 2> two{comp(0.5, 0.8, 0.6), comp(0.5, 0.8, 0.6)};
    const Matrix r = e_step(two, d, Family::Poisson);
    CHECK((r.array() - 0.5).abs().maxCoeff() < 1e-15);
  }
  SUBCASE("Bayes ratios") {
    const std::array<ComponentParams, 2> two{comp(0.35, 0.1, 0.4), comp(0.65, 1.9, 0.3)};
    const Matrix r = e_step(two, d, Family::Poisson);
    for (Eigen::Index i = 0; i < d.n(); ++i) {
      const int y = static_cast<int>(d.y[i]);
      const long double a = 0.35L * oracle::poisson_pmf(y, std::exp(0.1L + 0.4L * d.X(i, 1)));
      const long double b = 0.65L * oracle::poisson_pmf(y, std::exp(1.9L + 0.3L * d.X(i, 1)));
      CHECK(r(i, 0) == doctest::Approx(static_cast<double>(a / (a + b))).epsilon(1e-12));
      CHECK(r.row(i).sum() == doctest::Approx(1.0).epsilon(1e-14));
    }
  }
  SUBCASE("rows with underflowing densities become uniform with a warning") {
    Vector y(2);
    y << 2, 1e6;
    const Dataset far = make_dataset(y, Matrix::Zero(2, 1), {"x"});
    const std::array<ComponentParams, 2> two{comp(0.5, 0.0, 0.0), comp(0.5, 0.1, 0.0)};
    std::vector<std::string> warnings;
    const Matrix r = e_step(two, far, Family::Poisson, &warnings);
    CHECK(r.allFinite());
    CHECK((r.rowwise().sum().array() - 1).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("m_step") {
  const SimResult sim = separated(400, 5);
  const Dataset& d = sim.data;
  SUBCASE("all weight on one component") {
    Matrix r = Matrix::Zero(d.n(), 2);
    r.col(0).setOnes();
    CHECK_THROWS_AS(m_step(r, d, Family::Poisson, {}), CollapseError);
    const Matrix one = Matrix::Ones(d.n(), 1);
    const auto c = m_step(one, d, Family::Poisson, {});
    const GlmFit ref = fit_poisson(d);
    CHECK(c[0].pi == 1.0);
    CHECK((c[0].beta - ref.beta).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("uniform responsibilities give identical components") {
    const Matrix r = Matrix::Constant(d.n(), 3, 1.0 / 3);
    const auto c = m_step(r, d, Family::Poisson, {});
    for (const auto& g : c) {
      CHECK(g.pi == doctest::Approx(1.0 / 3).epsilon(1e-14));
      CHECK((g.beta - c[0].beta).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
  SUBCASE("hard partition equals separate fits") {
    Matrix r = Matrix::Zero(d.n(), 2);
    std::vector<Eigen::Index> rows0, rows1;
    for (Eigen::Index i = 0; i < d.n(); ++i) {
      r(i, sim.labels[static_cast<std::size_t>(i)]) = 1;
      (sim.labels[static_cast<std::size_t>(i)] == 0 ? rows0 : rows1).push_back(i);
    }
    const auto c = m_step(r, d, Family::Poisson, {});
    const GlmFit f0 = fit_poisson(select_rows(d, rows0));
    const GlmFit f1 = fit_poisson(select_rows(d, rows1));
    CHECK((c[0].beta - f0.beta).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((c[1].beta - f1.beta).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(c[0].pi == doctest::Approx(static_cast<double>(rows0.size()) / d.n()));
  }
  SUBCASE("constant covariate within a component is dropped") {
    Vector y(12);
    y << 1, 2, 0, 3, 1, 2, 9, 12, 10, 8, 11, 13;
    Matrix x(12, 1);
    x << 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 1, 2, 3, 4, 5, 6;
    const Dataset dd = make_dataset(y, x, {"x"});
    Matrix r = Matrix::Zero(12, 2);
    r.block(0, 0, 6, 1).setOnes();
    r.block(6, 1, 6, 1).setOnes();
    const auto c = m_step(r, dd, Family::Poisson, {});
    CHECK_FALSE(c[0].active[1]);
    CHECK(c[0].beta[1] == 0);
    CHECK(std::isnan(c[0].se[1]));
    CHECK(c[0].beta[0] == doctest::Approx(std::log(1.5)).epsilon(1e-10));
    CHECK(c[1].active[1]);
  }
}

TEST_CASE("init_by_count_mixture") {
  SUBCASE("G=1") {
    const InitResult r = init_by_count_mixture(toy(), 1, 1);
    CHECK((r.responsibilities.array() == 1.0).all());
  }
  SUBCASE("separates Poisson(5) from Poisson(50)") {
    auto rng = make_rng(99);
    boost::random::poisson_distribution<int, double> lo(5.0), hi(50.0);
    Vector y(400);
    for (Eigen::Index i = 0; i < 400; ++i) y[i] = i < 200 ? lo(rng) : hi(rng);
    const InitResult r = init_by_count_mixture(make_dataset(y, Matrix::Zero(400, 0), {}), 2, 3);
    CHECK_FALSE(r.fallback);
    int correct = 0;
    for (Eigen::Index i = 0; i < 400; ++i) correct += r.responsibilities(i, i < 200 ? 0 : 1) == 1.0;
    CHECK(correct >= 380);
  }
  SUBCASE("constant y falls back to a deterministic split") {
    const Dataset d = make_dataset(Vector::Constant(20, 4), Matrix::Zero(20, 0), {});
    const InitResult a = init_by_count_mixture(d, 2, 7);
    const InitResult b = init_by_count_mixture(d, 2, 7);
    CHECK(a.fallback);
    CHECK_FALSE(a.warnings.empty());
    CHECK(a.responsibilities == b.responsibilities);
    CHECK(a.responsibilities.col(0).sum() == 10);
    CHECK(a.responsibilities.col(1).sum() == 10);
  }
}

TEST_CASE("em_fit") {
  SUBCASE("G=1 reproduces the single-family fits") {
    const SimResult sim = separated(300, 2);
    const MixtureModel m = em_fit(sim.data, 1, Family::Poisson, 1);
    const GlmFit f = fit_poisson(sim.data);
    CHECK(std::abs(m.logL - f.logL) < 1e-10);
    CHECK((m.components[0].beta - f.beta).cwiseAbs().maxCoeff() < 1e-8);
    const MixtureModel nb = em_fit(sim.data, 1, Family::NB2, 1);
    const GlmFit fn = fit_nb2(sim.data);
    CHECK(std::abs(nb.logL - fn.logL) < 1e-8);
    CHECK(nb.components[0].alpha == doctest::Approx(fn.alpha).epsilon(1e-6));
  }
  SUBCASE("grouped simulation: G=2 beats G=1") {
    const SimResult sim = gen_grouped_sim(12);
    const double l1 = em_fit(sim.data, 1, Family::Poisson, 12).logL;
    const double l2 = em_fit(sim.data, 2, Family::Poisson, 12).logL;
    CHECK(l2 > l1);
  }
  SUBCASE("monotone trace, simplex responsibilities, consistent logL") {
    const SimResult sim = gen_grouped_sim(4);
    for (Family f : {Family::Poisson, Family::NB2}) {
      const MixtureModel m = em_fit(sim.data, 3, f, 4);
      for (std::size_t t = 1; t < m.logL_trace.size(); ++t)
        CHECK(m.logL_trace[t] >= m.logL_trace[t - 1] - 1e-8);
      CHECK((m.responsibilities.rowwise().sum().array() - 1).abs().maxCoeff() < 1e-10);
      CHECK(m.responsibilities.minCoeff() >= 0);
      CHECK(m.responsibilities.maxCoeff() <= 1);
      CHECK(std::abs(m.logL - mixture_loglik(m.components, sim.data, f)) < 1e-8);
    }
  }
  SUBCASE("recovery up to label permutation") {
    const SimResult sim = separated(1500, 31);
    const MixtureModel m = em_fit(sim.data, 2, Family::Poisson, 31);
    REQUIRE(m.G() == 2);
    Vector t0(2), t1(2);
    t0 << 0.5, 0.3;
    t1 << 3.0, -0.2;
    const bool swap = (m.components[0].beta - t0).norm() + (m.components[1].beta - t1).norm() >
                      (m.components[0].beta - t1).norm() + (m.components[1].beta - t0).norm();
    const ComponentParams& c0 = m.components[swap ? 1 : 0];
    const ComponentParams& c1 = m.components[swap ? 0 : 1];
    for (int j = 0; j < 2; ++j) {
      CHECK(std::abs(c0.beta[j] - t0[j]) < 3 * c0.se[j]);
      CHECK(std::abs(c1.beta[j] - t1[j]) < 3 * c1.se[j]);
    }
    CHECK(std::abs(c0.pi - 0.4) < 0.05);
  }
  SUBCASE("deterministic for a fixed seed") {
    const SimResult sim = gen_grouped_sim(8);
    const MixtureModel a = em_fit(sim.data, 3, Family::Poisson, 8);
    const MixtureModel b = em_fit(sim.data, 3, Family::Poisson, 8);
    CHECK(a.logL == b.logL);
    CHECK(a.responsibilities == b.responsibilities);
    for (int g = 0; g < 3; ++g) CHECK(a.components[g].beta == b.components[g].beta);
  }
  SUBCASE("n below G(p+2) is rejected") {
    const Dataset d = make_dataset(Vector::Constant(12, 3), Matrix::Zero(12, 1), {"x"});
    CHECK_THROWS_AS(em_fit(d, 5, Family::Poisson, 1), DimensionError);
  }
  SUBCASE("identical-count data cannot support two components") {
    Vector y(30);
    for (Eigen::Index i = 0; i < 30; ++i) y[i] = i % 3;
    Matrix x(30, 1);
    for (Eigen::Index i = 0; i < 30; ++i) x(i, 0) = static_cast<double>(i % 5);
    const MixtureModel m = em_fit(make_dataset(y, x, {"x"}), 5, Family::Poisson, 3);
    CHECK(m.G() <= 5);
    if (m.G() < 5) CHECK(m.collapsed_from.value_or(0) >= m.G() + 1);
  }
}
