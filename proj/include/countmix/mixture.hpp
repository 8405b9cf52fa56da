#pragma once

#include "countmix/countglm.hpp"
#include "countmix/data.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace countmix {

struct ComponentParams {
  double pi = 1.0;
  Vector beta;
  double alpha = 0.0;  // 0 for Poisson components
  // Columns fitted in this component. A covariate that is constant over the
  // component's weighted support is dropped (beta fixed at 0).
  std::vector<bool> active;
  Vector se;  // from the component's weighted fit; NaN for dropped columns
  bool alpha_at_bound = false;
};

struct MixtureModel {
  Family family = Family::Poisson;
  std::vector<ComponentParams> components;
  double logL = 0;
  Matrix responsibilities;  // n x G
  bool converged = false;
  int iterations = 0;
  std::vector<double> logL_trace;  // observed-data logL after every M-step
  int restart = 0;                 // which restart produced this model
  std::optional<int> collapsed_from;
  std::vector<std::string> warnings;

  int G() const { return static_cast<int>(components.size()); }
};

struct EmOptions {
  int max_iter = 500;
  double tol = 1e-8;
  GlmOptions glm;
};

// log f_g(y_i | x_i) for every row; -inf where the mean overflows.
Vector component_logpdf(const ComponentParams& c, const Dataset& d, Family family);

/// Observed-data log-likelihood sum_i log sum_g pi_g f_g(y_i | x_i).
double mixture_loglik(std::span<const ComponentParams> components, const Dataset& d,
                      Family family);

/// Posterior membership probabilities. Rows whose densities all underflow get
/// uniform responsibilities and a note in `warnings`.
Matrix e_step(std::span<const ComponentParams> components, const Dataset& d, Family family,
              std::vector<std::string>* warnings = nullptr);

/// Weighted refit of every component; `prev` (possibly empty) warm-starts the
/// fits. Throws CollapseError when a component's effective size is below p+2.
std::vector<ComponentParams> m_step(const Matrix& responsibilities, const Dataset& d,
                                    Family family, std::span<const ComponentParams> prev,
                                    const GlmOptions& opt = {});

struct InitResult {
  Matrix responsibilities;  // hard 0/1
  bool fallback = false;
  std::vector<std::string> warnings;
};

/// Groups rows by fitting a covariate-free Poisson mixture to y alone and
/// taking the MAP label, ordered by increasing group mean.
InitResult init_by_count_mixture(const Dataset& d, int G, std::uint64_t seed);

MixtureModel em_fit(const Dataset& d, int G, Family family, std::uint64_t seed, int restarts = 5,
                    const EmOptions& opt = {});

// MAP component index per row.
std::vector<int> map_assignments(const MixtureModel& m);

}  // namespace countmix
