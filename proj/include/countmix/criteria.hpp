#pragma once

#include "countmix/mixture.hpp"

#include <optional>

namespace countmix {

/// One row of the G-sweep table. `ok` is false for a G whose fit failed; the
/// scores are then NaN and `note` says why.
struct ScoreRow {
  int G = 0;
  double logL = 0;
  int n_k = 0;
  double aic = 0;
  double sbc = 0;
  double caic = 0;
  std::optional<double> icomp;
  std::optional<double> ifim_condition;
  bool ok = true;
  bool converged = true;
  std::string note;

  std::optional<double> value(Criterion c) const;
};

// G*(p_active+1) coefficients, G-1 free weights, plus G dispersions for NB-2.
int count_params(int G, int p_active, Family family);

double aic(double logL, int n_k);
double sbc(double logL, int n_k, Eigen::Index n);
double caic(double logL, int n_k, Eigen::Index n);

// NB-2 dispersion that is not pinned at its lower bound. A pinned alpha is a
// boundary value with a flat likelihood and stays out of the IFIM.
bool dispersion_free(const MixtureModel& m, const ComponentParams& c);

/// Free-parameter vector used by observed_info: per component the active
/// coefficients then log alpha when free; finally G-1 weight logits against
/// the last component.
Vector pack_parameters(const MixtureModel& m);
std::vector<ComponentParams> unpack_parameters(const MixtureModel& layout, const Vector& theta);

// Analytic score of mixture_loglik with respect to pack_parameters().
Vector mixture_gradient(const MixtureModel& layout, const Vector& theta, const Dataset& d);

/// Negative Hessian of the observed-data log-likelihood, by central
/// differences of the analytic score, symmetrized.
Matrix observed_info(const MixtureModel& m, const Dataset& d);

/// Bozdogan's C1 entropic complexity of a covariance matrix.
double complexity_c1(const Matrix& cov);

// max/min eigenvalue; +inf when the smallest is not positive.
double ifim_condition(const Matrix& info);

/// -2 logL + 2 C1(info^-1), or nullopt when info is too close to singular
/// (smallest eigenvalue <= 1e-10 * largest, or condition number > 1e12).
std::optional<double> icomp(double logL, const Matrix& info);

ScoreRow score_model(const MixtureModel& m, const Dataset& d);

}  // namespace countmix
