#include "countmix/simulate.hpp"

#include "countmix/errors.hpp"
#include "countmix/rng.hpp"

#include <boost/random/bernoulli_distribution.hpp>
#include <boost/random/discrete_distribution.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include <algorithm>
#include <cmath>

namespace countmix {

namespace {

constexpr double kMaxMean = 1e9;

double draw_count(Rng& rng, double mu, double alpha) {
  double rate = mu;
  if (alpha > 0) {
    boost::random::gamma_distribution<double> gamma(1.0 / alpha, alpha * mu);
    rate = gamma(rng);
  }
  if (rate <= 0) return 0.0;
  boost::random::poisson_distribution<long, double> pois(rate);
  return static_cast<double>(pois(rng));
}

}  // namespace

SimResult gen_grouped_sim(std::uint64_t seed, int n_per_group, bool reject_close, int groups) {
  if (n_per_group < 1) throw SpecError("n_per_group must be at least 1");
  if (groups < 1 || groups > 5) throw SpecError("group count must lie in 1..5");
  auto rng = make_rng(seed, 0x5151);
  boost::random::uniform_int_distribution<int> unif(1, 50);

  SimResult out;
  while (static_cast<int>(out.groups.size()) < groups) {
    SimGroup g{unif(rng), unif(rng)};
    if (reject_close) {
      const bool close = std::any_of(out.groups.begin(), out.groups.end(),
                                     [&](const SimGroup& h) { return std::abs(h.lambda - g.lambda) <= 5; });
      if (close) continue;
    }
    out.groups.push_back(g);
  }

  const Eigen::Index n = static_cast<Eigen::Index>(groups) * n_per_group;
  Vector y(n);
  Matrix x(n, 1);
  Eigen::Index i = 0;
  for (int g = 0; g < groups; ++g) {
    boost::random::normal_distribution<double> norm(out.groups[static_cast<std::size_t>(g)].mu, 1.0);
    for (int k = 0; k < n_per_group; ++k, ++i) {
      x(i, 0) = norm(rng);
      y[i] = draw_count(rng, out.groups[static_cast<std::size_t>(g)].lambda, 0.0);
      out.labels.push_back(g);
    }
  }
  out.data = make_dataset(std::move(y), x, {"x"}, "y");
  return out;
}

SimResult gen_regression_mixture(const MixtureSpec& spec, Eigen::Index n, std::uint64_t seed) {
  const auto G = spec.components.size();
  if (G < 1 || G > 5) throw SpecError("component count must lie in 1..5");
  if (n < 1) throw SpecError("n must be positive");
  const auto p = static_cast<Eigen::Index>(spec.covariates.size());
  std::vector<double> weights;
  double total = 0;
  for (const auto& c : spec.components) {
    if (c.beta.size() != p + 1) throw SpecError("each beta needs p+1 entries (intercept first)");
    if (!(c.pi >= 0) || !(c.alpha >= 0)) throw SpecError("pi and alpha must be non-negative");
    weights.push_back(c.pi);
    total += c.pi;
  }
  if (std::abs(total - 1.0) > 1e-9) throw SpecError("component weights must sum to 1");

  auto rng = make_rng(seed, 0x7e57);
  boost::random::discrete_distribution<int, double> which(weights.begin(), weights.end());

  SimResult out;
  Vector y(n);
  Matrix x(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int g = which(rng);
    out.labels.push_back(g);
    for (Eigen::Index j = 0; j < p; ++j) {
      const auto& dist = spec.covariates[static_cast<std::size_t>(j)];
      switch (dist.kind) {
        case CovariateDist::Kind::Normal:
          x(i, j) = boost::random::normal_distribution<double>(dist.a, dist.b)(rng);
          break;
        case CovariateDist::Kind::Uniform:
          x(i, j) = boost::random::uniform_real_distribution<double>(dist.a, dist.b)(rng);
          break;
        case CovariateDist::Kind::Bernoulli:
          x(i, j) = boost::random::bernoulli_distribution<double>(dist.a)(rng) ? 1.0 : 0.0;
          break;
      }
    }
    const auto& comp = spec.components[static_cast<std::size_t>(g)];
    const double eta = comp.beta[0] + x.row(i).dot(comp.beta.tail(p));
    const double mu = std::exp(eta);
    if (!std::isfinite(mu) || mu > kMaxMean)
      throw SpecError("exp(x'beta) overflows at row " + std::to_string(i) +
                      "; use smaller coefficients");
    y[i] = draw_count(rng, mu, comp.alpha);
  }
  std::vector<std::string> names;
  for (std::size_t j = 0; j < spec.covariates.size(); ++j)
    names.push_back(spec.covariates[j].name.empty() ? "x" + std::to_string(j + 1)
                                                   : spec.covariates[j].name);
  out.data = make_dataset(std::move(y), x, std::move(names), "y");
  return out;
}

}  // namespace countmix
