#include "countmix/mixture.hpp"

#include "countmix/errors.hpp"
#include "countmix/kernels.hpp"
#include "countmix/numeric.hpp"
#include "countmix/rng.hpp"

#include <boost/random/exponential_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace countmix {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kDropVariance = 1e-12;

void check_components(std::span<const ComponentParams> comps, const Dataset& d) {
  if (comps.empty()) throw DimensionError("mixture has no components");
  for (const auto& c : comps) {
    if (!(c.pi > 0)) throw DomainError("mixture weights must be positive");
    if (c.beta.size() != d.X.cols())
      throw DimensionError("component coefficients do not match the design");
  }
}

double quantile_sorted(const std::vector<double>& sorted, double level) {
  const double pos = level * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// Contiguous split of rows ordered by y; ties are shuffled with the seed so
// equal counts do not inherit file order.
Matrix quantile_bin_split(const Dataset& d, int G, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(d.n());
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  auto rng = make_rng(seed, 0x1a17);
  std::vector<std::uint64_t> tiebreak(n);
  for (auto& t : tiebreak) t = rng();
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (d.y[a] != d.y[b]) return d.y[a] < d.y[b];
    return tiebreak[static_cast<std::size_t>(a)] < tiebreak[static_cast<std::size_t>(b)];
  });
  Matrix r = Matrix::Zero(d.n(), G);
  const std::size_t base = n / static_cast<std::size_t>(G);
  const std::size_t extra = n % static_cast<std::size_t>(G);
  std::size_t pos = 0;
  for (int g = 0; g < G; ++g) {
    const std::size_t size = base + (static_cast<std::size_t>(g) < extra ? 1 : 0);
    for (std::size_t k = 0; k < size; ++k) r(order[pos++], g) = 1.0;
  }
  return r;
}

void check_collapse(std::span<const ComponentParams> comps, const Dataset& d) {
  const double floor = 1.0 / (2.0 * static_cast<double>(d.n()));
  for (std::size_t g = 0; g < comps.size(); ++g)
    if (comps[g].pi < floor)
      throw CollapseError("component " + std::to_string(g + 1) + " weight fell below 1/(2n)");
}

Dataset keep_columns(const Dataset& d, const std::vector<bool>& active) {
  std::vector<Eigen::Index> cols;
  Dataset out;
  out.y = d.y;
  out.outcome_name = d.outcome_name;
  for (std::size_t j = 0; j < active.size(); ++j) {
    if (!active[j]) continue;
    cols.push_back(static_cast<Eigen::Index>(j));
    if (j > 0) out.names.push_back(d.names[j - 1]);
  }
  out.X = d.X(Eigen::all, cols);
  return out;
}

}  // namespace

Vector component_logpdf(const ComponentParams& c, const Dataset& d, Family family) {
  const Vector eta = d.X * c.beta;
  std::optional<kernels::Nb2CountTable> table;
  if (family == Family::NB2) table.emplace(c.alpha, d.n() ? d.y.maxCoeff() : 0.0);
  Vector out(d.n());
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    if (std::isnan(eta[i])) throw OverflowError("linear predictor is NaN", static_cast<std::size_t>(i));
    if (!std::isfinite(std::exp(eta[i]))) {
      out[i] = kNegInf;
      continue;
    }
    const double v = family == Family::Poisson ? kernels::poisson_logpmf(d.y[i], eta[i])
                                               : kernels::nb2_logpmf_with_ratio(d.y[i], eta[i], c.alpha,
                                                                                table->ratio(d.y[i]));
    out[i] = std::isnan(v) ? kNegInf : v;
  }
  return out;
}

namespace {

// n x G matrix of log(pi_g) + log f_g(y_i).
Matrix joint_log_density(std::span<const ComponentParams> comps, const Dataset& d, Family family) {
  Matrix L(d.n(), static_cast<Eigen::Index>(comps.size()));
  for (std::size_t g = 0; g < comps.size(); ++g)
    L.col(static_cast<Eigen::Index>(g)) =
        component_logpdf(comps[g], d, family).array() + std::log(comps[g].pi);
  return L;
}

}  // namespace

double mixture_loglik(std::span<const ComponentParams> comps, const Dataset& d, Family family) {
  check_components(comps, d);
  const Matrix L = joint_log_density(comps, d, family);
  double sum = 0;
  for (Eigen::Index i = 0; i < L.rows(); ++i) sum += log_sum_exp(L.row(i));
  return sum;
}

Matrix e_step(std::span<const ComponentParams> comps, const Dataset& d, Family family,
              std::vector<std::string>* warnings) {
  check_components(comps, d);
  const Matrix L = joint_log_density(comps, d, family);
  Matrix r(L.rows(), L.cols());
  for (Eigen::Index i = 0; i < L.rows(); ++i) {
    const double lse = log_sum_exp(L.row(i));
    if (!std::isfinite(lse)) {
      r.row(i).setConstant(1.0 / static_cast<double>(L.cols()));
      if (warnings)
        warnings->push_back("row " + std::to_string(i) +
                            ": all component densities vanish; uniform responsibilities used");
      continue;
    }
    r.row(i) = (L.row(i).array() - lse).exp();
    r.row(i) /= r.row(i).sum();
  }
  return r;
}

std::vector<ComponentParams> m_step(const Matrix& resp, const Dataset& d, Family family,
                                    std::span<const ComponentParams> prev, const GlmOptions& opt) {
  if (resp.rows() != d.n()) throw DimensionError("responsibility rows do not match the data");
  const auto G = static_cast<std::size_t>(resp.cols());
  if (!prev.empty() && prev.size() != G)
    throw DimensionError("previous components do not match the responsibility columns");
  const Eigen::Index k = d.X.cols();
  const double min_size = static_cast<double>(d.p() + 2);

  std::vector<double> sizes(G);
  for (std::size_t g = 0; g < G; ++g) sizes[g] = resp.col(static_cast<Eigen::Index>(g)).sum();
  const double total = std::accumulate(sizes.begin(), sizes.end(), 0.0);

  std::vector<ComponentParams> out(G);
  for (std::size_t g = 0; g < G; ++g) {
    if (sizes[g] < min_size)
      throw CollapseError("component " + std::to_string(g + 1) + " has effective size " +
                          std::to_string(sizes[g]) + " < p+2");
    const Vector w = resp.col(static_cast<Eigen::Index>(g));
    ComponentParams& c = out[g];
    c.pi = sizes[g] / total;

    // Drop covariates with no spread over this component's weighted support.
    c.active.assign(static_cast<std::size_t>(k), true);
    Vector start = prev.empty() ? Vector() : prev[g].beta;
    for (Eigen::Index j = 1; j < k; ++j) {
      const double mean = w.dot(d.X.col(j)) / sizes[g];
      const double var = (w.array() * (d.X.col(j).array() - mean).square()).sum() / sizes[g];
      if (var < kDropVariance) {
        c.active[static_cast<std::size_t>(j)] = false;
        if (start.size()) {
          start[0] += start[j] * mean;  // keep the linear predictor unchanged
          start[j] = 0.0;
        }
      }
    }
    const bool reduced = std::find(c.active.begin(), c.active.end(), false) != c.active.end();
    const Dataset sub = reduced ? keep_columns(d, c.active) : Dataset();
    const Dataset& fit_data = reduced ? sub : d;
    Vector sub_start;
    if (start.size()) {
      sub_start.resize(fit_data.X.cols());
      Eigen::Index m = 0;
      for (Eigen::Index j = 0; j < k; ++j)
        if (c.active[static_cast<std::size_t>(j)]) sub_start[m++] = start[j];
    }

    GlmFit fit;
    if (family == Family::Poisson) {
      fit = fit_poisson(fit_data, w, sub_start, opt);
    } else {
      Nb2Start s{sub_start, prev.empty() ? 0.0 : prev[g].alpha};
      fit = fit_nb2(fit_data, w, s, opt);
    }
    c.alpha = family == Family::Poisson ? 0.0 : fit.alpha;
    c.alpha_at_bound = fit.alpha_at_bound;
    c.beta = Vector::Zero(k);
    c.se = Vector::Constant(k, std::numeric_limits<double>::quiet_NaN());
    Eigen::Index m = 0;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (!c.active[static_cast<std::size_t>(j)]) continue;
      c.beta[j] = fit.beta[m];
      c.se[j] = fit.se[m];
      ++m;
    }
  }
  return out;
}

InitResult init_by_count_mixture(const Dataset& d, int G, std::uint64_t seed) {
  if (G < 1) throw InputError("G must be at least 1");
  if (d.n() < static_cast<Eigen::Index>(G) * (d.p() + 2))
    throw DimensionError("need at least G*(p+2) rows to initialize " + std::to_string(G) +
                         " components");
  InitResult out;
  if (G == 1) {
    out.responsibilities = Matrix::Ones(d.n(), 1);
    return out;
  }
  const std::set<double> distinct(d.y.data(), d.y.data() + d.y.size());
  if (distinct.size() < static_cast<std::size_t>(G)) {
    out.fallback = true;
    out.warnings.push_back("fewer distinct counts than components; using quantile bins");
    out.responsibilities = quantile_bin_split(d, G, seed);
    return out;
  }

  std::vector<double> sorted(d.y.data(), d.y.data() + d.y.size());
  std::sort(sorted.begin(), sorted.end());
  Vector lambda(G);
  for (int g = 0; g < G; ++g) {
    lambda[g] = std::max(quantile_sorted(sorted, (g + 0.5) / G), 1e-3);
    if (g > 0) lambda[g] = std::max(lambda[g], lambda[g - 1] * 1.01 + 1e-3);
  }
  Vector pi = Vector::Constant(G, 1.0 / G);

  Matrix r(d.n(), G);
  for (int iter = 0; iter < 50; ++iter) {
    for (Eigen::Index i = 0; i < d.n(); ++i) {
      Eigen::RowVectorXd l(G);
      for (int g = 0; g < G; ++g)
        l[g] = std::log(pi[g]) + kernels::poisson_logpmf(d.y[i], std::log(lambda[g]));
      const double lse = log_sum_exp(l);
      r.row(i) = (l.array() - lse).exp();
    }
    for (int g = 0; g < G; ++g) {
      const double size = r.col(g).sum();
      if (size <= 0) continue;
      lambda[g] = std::max(r.col(g).dot(d.y) / size, 1e-8);
      pi[g] = std::max(size / static_cast<double>(d.n()), 1e-12);
    }
    pi /= pi.sum();
  }

  // Hard MAP labels, relabelled by increasing lambda.
  std::vector<int> order(static_cast<std::size_t>(G));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return lambda[a] < lambda[b]; });
  std::vector<int> rank(static_cast<std::size_t>(G));
  for (int g = 0; g < G; ++g) rank[static_cast<std::size_t>(order[static_cast<std::size_t>(g)])] = g;

  Matrix hard = Matrix::Zero(d.n(), G);
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    Eigen::Index best = 0;
    r.row(i).maxCoeff(&best);
    hard(i, rank[static_cast<std::size_t>(best)]) = 1.0;
  }
  const double min_size = static_cast<double>(d.p() + 2);
  if ((hard.colwise().sum().array() < min_size).any()) {
    out.fallback = true;
    out.warnings.push_back("count mixture left a group smaller than p+2; using quantile bins");
    out.responsibilities = quantile_bin_split(d, G, seed);
    return out;
  }
  out.responsibilities = std::move(hard);
  return out;
}

namespace {

// Each row becomes the average of its hard label and a Dirichlet(1) draw.
Matrix perturb(const Matrix& hard, std::uint64_t seed, int restart) {
  auto rng = make_rng(seed, static_cast<std::uint64_t>(restart));
  boost::random::exponential_distribution<double> expo(1.0);
  Matrix r(hard.rows(), hard.cols());
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    for (Eigen::Index g = 0; g < r.cols(); ++g) r(i, g) = expo(rng);
    r.row(i) /= r.row(i).sum();
    r.row(i) = 0.5 * (r.row(i) + hard.row(i));
  }
  return r;
}

// Standard errors for components fitted with them switched off, at the
// responsibilities of their last M-step.
void fill_standard_errors(std::vector<ComponentParams>& comps, const Matrix& resp,
                          const Dataset& d, Family family) {
  const Eigen::Index k = d.X.cols();
  for (std::size_t g = 0; g < comps.size(); ++g) {
    ComponentParams& c = comps[g];
    const bool reduced = std::find(c.active.begin(), c.active.end(), false) != c.active.end();
    const Dataset sub = reduced ? keep_columns(d, c.active) : Dataset();
    const Dataset& fit_data = reduced ? sub : d;
    GlmFit fit;
    fit.family = family;
    fit.alpha = c.alpha;
    fit.alpha_at_bound = c.alpha_at_bound;
    fit.beta.resize(fit_data.X.cols());
    Eigen::Index m = 0;
    for (Eigen::Index j = 0; j < k; ++j)
      if (c.active[static_cast<std::size_t>(j)]) fit.beta[m++] = c.beta[j];
    const Vector se = standard_errors(fit_data, resp.col(static_cast<Eigen::Index>(g)), fit);
    m = 0;
    for (Eigen::Index j = 0; j < k; ++j)
      if (c.active[static_cast<std::size_t>(j)]) c.se[j] = se[m++];
  }
}

MixtureModel run_em(const Dataset& d, Family family, const Matrix& start, const EmOptions& opt) {
  MixtureModel m;
  m.family = family;
  GlmOptions glm = opt.glm;
  glm.standard_errors = false;
  auto comps = m_step(start, d, family, {}, glm);
  check_collapse(comps, d);
  Matrix last = start;
  double ll = mixture_loglik(comps, d, family);
  m.logL_trace.push_back(ll);
  int it = 1;
  for (; it <= opt.max_iter; ++it) {
    last = e_step(comps, d, family);
    comps = m_step(last, d, family, comps, glm);
    check_collapse(comps, d);
    const double next = mixture_loglik(comps, d, family);
    m.logL_trace.push_back(next);
    const double change = std::abs(next - ll) / std::max(1.0, std::abs(ll));
    ll = next;
    if (change < opt.tol) {
      m.converged = true;
      break;
    }
  }
  m.iterations = std::min(it, opt.max_iter);
  if (opt.glm.standard_errors) fill_standard_errors(comps, last, d, family);
  m.responsibilities = e_step(comps, d, family, &m.warnings);
  m.components = std::move(comps);
  m.logL = ll;
  return m;
}

}  // namespace

MixtureModel em_fit(const Dataset& d, int G, Family family, std::uint64_t seed, int restarts,
                    const EmOptions& opt) {
  if (G < 1) throw InputError("G must be at least 1");
  if (restarts < 1) throw InputError("restarts must be at least 1");
  if (d.n() < static_cast<Eigen::Index>(G) * (d.p() + 2))
    throw DimensionError("n=" + std::to_string(d.n()) + " is too small for G=" +
                         std::to_string(G) + " components with p=" + std::to_string(d.p()));

  const InitResult init = init_by_count_mixture(d, G, seed);
  const int runs = G == 1 ? 1 : restarts;
  std::optional<MixtureModel> best;
  std::vector<std::string> failures;
  for (int r = 0; r < runs; ++r) {
    const Matrix start = r == 0 ? init.responsibilities : perturb(init.responsibilities, seed, r);
    try {
      MixtureModel m = run_em(d, family, start, opt);
      m.restart = r;
      if (!best || m.logL > best->logL) best = std::move(m);
    } catch (const ComputeError& e) {
      failures.push_back("restart " + std::to_string(r) + ": " + e.what());
    }
  }

  if (!best) {
    if (G == 1) throw CollapseError("single-component fit failed: " + failures.front());
    MixtureModel reduced = em_fit(d, G - 1, family, seed, restarts, opt);
    if (!reduced.collapsed_from) reduced.collapsed_from = G;
    reduced.warnings.push_back("all " + std::to_string(runs) + " restarts collapsed at G=" +
                               std::to_string(G));
    for (auto& f : failures) reduced.warnings.push_back(std::move(f));
    return reduced;
  }
  best->warnings.insert(best->warnings.begin(), init.warnings.begin(), init.warnings.end());
  for (auto& f : failures) best->warnings.push_back(std::move(f));
  return std::move(*best);
}

std::vector<int> map_assignments(const MixtureModel& m) {
  std::vector<int> out(static_cast<std::size_t>(m.responsibilities.rows()));
  for (Eigen::Index i = 0; i < m.responsibilities.rows(); ++i) {
    Eigen::Index g = 0;
    m.responsibilities.row(i).maxCoeff(&g);
    out[static_cast<std::size_t>(i)] = static_cast<int>(g);
  }
  return out;
}

}  // namespace countmix
