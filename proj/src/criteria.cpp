#include "countmix/criteria.hpp"

#include "countmix/errors.hpp"
#include "countmix/kernels.hpp"
#include "countmix/numeric.hpp"

#include <cmath>
#include <limits>

namespace countmix {

namespace {

constexpr double kPdRatio = 1e-10;
constexpr double kMaxCondition = 1e12;
constexpr double kHessianStep = 1e-5;

}  // namespace

std::optional<double> ScoreRow::value(Criterion c) const {
  if (!ok) return std::nullopt;
  switch (c) {
    case Criterion::AIC: return aic;
    case Criterion::SBC: return sbc;
    case Criterion::CAIC: return caic;
    case Criterion::ICOMP: return icomp;
  }
  return std::nullopt;
}

int count_params(int G, int p_active, Family family) {
  if (G < 1 || p_active < 0) throw InputError("count_params needs G >= 1 and p >= 0");
  return G * (p_active + 1) + (G - 1) + (family == Family::NB2 ? G : 0);
}

double aic(double logL, int n_k) { return -2.0 * logL + 2.0 * n_k; }

double sbc(double logL, int n_k, Eigen::Index n) {
  return -2.0 * logL + n_k * std::log(static_cast<double>(n));
}

double caic(double logL, int n_k, Eigen::Index n) {
  return -2.0 * logL + n_k * (std::log(static_cast<double>(n)) + 1.0);
}

bool dispersion_free(const MixtureModel& m, const ComponentParams& c) {
  return m.family == Family::NB2 && c.alpha > GlmOptions{}.alpha_min * (1 + 1e-6);
}

Vector pack_parameters(const MixtureModel& m) {
  std::vector<double> theta;
  for (const auto& c : m.components) {
    for (Eigen::Index j = 0; j < c.beta.size(); ++j)
      if (c.active.empty() || c.active[static_cast<std::size_t>(j)]) theta.push_back(c.beta[j]);
    if (dispersion_free(m, c)) theta.push_back(std::log(c.alpha));
  }
  const double last = m.components.back().pi;
  for (std::size_t g = 0; g + 1 < m.components.size(); ++g)
    theta.push_back(std::log(m.components[g].pi / last));
  return Eigen::Map<const Vector>(theta.data(), static_cast<Eigen::Index>(theta.size()));
}

std::vector<ComponentParams> unpack_parameters(const MixtureModel& layout, const Vector& theta) {
  std::vector<ComponentParams> comps = layout.components;
  Eigen::Index pos = 0;
  for (auto& c : comps) {
    for (Eigen::Index j = 0; j < c.beta.size(); ++j)
      if (c.active.empty() || c.active[static_cast<std::size_t>(j)]) c.beta[j] = theta[pos++];
    if (dispersion_free(layout, c)) c.alpha = std::exp(theta[pos++]);
  }
  const auto G = comps.size();
  Vector logits = Vector::Zero(static_cast<Eigen::Index>(G));
  for (std::size_t g = 0; g + 1 < G; ++g) logits[static_cast<Eigen::Index>(g)] = theta[pos++];
  if (pos != theta.size()) throw DimensionError("parameter vector does not match the model layout");
  const double lse = log_sum_exp(logits);
  for (std::size_t g = 0; g < G; ++g) comps[g].pi = std::exp(logits[static_cast<Eigen::Index>(g)] - lse);
  return comps;
}

Vector mixture_gradient(const MixtureModel& layout, const Vector& theta, const Dataset& d) {
  const auto comps = unpack_parameters(layout, theta);
  const Matrix r = e_step(comps, d, layout.family);
  Vector grad(theta.size());
  Eigen::Index pos = 0;
  for (std::size_t g = 0; g < comps.size(); ++g) {
    const auto& c = comps[g];
    const Eigen::Index gi = static_cast<Eigen::Index>(g);
    const Vector eta = d.X * c.beta;
    Vector s(d.n());
    double ga = 0;
    for (Eigen::Index i = 0; i < d.n(); ++i) {
      if (layout.family == Family::Poisson) {
        s[i] = r(i, gi) * kernels::poisson_score(d.y[i], eta[i]);
      } else {
        s[i] = r(i, gi) * kernels::nb2_score(d.y[i], eta[i], c.alpha);
        if (r(i, gi) != 0) ga += r(i, gi) * kernels::nb2_dalpha(d.y[i], eta[i], c.alpha);
      }
    }
    const Vector gb = d.X.transpose() * s;
    for (Eigen::Index j = 0; j < c.beta.size(); ++j)
      if (c.active.empty() || c.active[static_cast<std::size_t>(j)]) grad[pos++] = gb[j];
    if (dispersion_free(layout, layout.components[g])) grad[pos++] = c.alpha * ga;
  }
  for (std::size_t g = 0; g + 1 < comps.size(); ++g) {
    const Eigen::Index gi = static_cast<Eigen::Index>(g);
    grad[pos++] = r.col(gi).sum() - static_cast<double>(d.n()) * comps[g].pi;
  }
  return grad;
}

Matrix observed_info(const MixtureModel& m, const Dataset& d) {
  const Vector theta = pack_parameters(m);
  auto grad = [&](const Vector& t) { return mixture_gradient(m, t, d); };
  Matrix info = -symmetric_jacobian(grad, theta, kHessianStep);
  if (!info.allFinite()) throw InfoMatrixError("observed information has non-finite entries");
  return info;
}

double complexity_c1(const Matrix& cov) {
  const double s = static_cast<double>(cov.rows());
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) throw InfoMatrixError("covariance is not positive definite");
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return 0.5 * s * std::log(cov.trace() / s) - 0.5 * logdet;
}

double ifim_condition(const Matrix& info) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(info, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

std::optional<double> icomp(double logL, const Matrix& info) {
  if (info.rows() != info.cols() || info.rows() == 0)
    throw InputError("information matrix must be square and non-empty");
  const double scale = std::max(1.0, info.cwiseAbs().maxCoeff());
  if ((info - info.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw InputError("information matrix must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(info, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(hi > 0) || lo <= kPdRatio * hi || hi / lo > kMaxCondition) return std::nullopt;
  Eigen::LLT<Matrix> llt(info);
  if (llt.info() != Eigen::Success) return std::nullopt;
  const Matrix cov = llt.solve(Matrix::Identity(info.rows(), info.cols()));
  try {
    return -2.0 * logL + 2.0 * complexity_c1((cov + cov.transpose()) / 2.0);
  } catch (const InfoMatrixError&) {
    return std::nullopt;
  }
}

ScoreRow score_model(const MixtureModel& m, const Dataset& d) {
  ScoreRow row;
  row.G = m.G();
  row.logL = m.logL;
  row.n_k = count_params(m.G(), static_cast<int>(d.p()), m.family);
  row.aic = aic(m.logL, row.n_k);
  row.sbc = sbc(m.logL, row.n_k, d.n());
  row.caic = caic(m.logL, row.n_k, d.n());
  row.converged = m.converged;
  try {
    const Matrix info = observed_info(m, d);
    row.ifim_condition = ifim_condition(info);
    row.icomp = icomp(m.logL, info);
    if (!row.icomp) row.note = "unstable IFIM; ICOMP unavailable";
  } catch (const ComputeError& e) {
    row.note = std::string("ICOMP unavailable: ") + e.what();
  }
  return row;
}

}  // namespace countmix
