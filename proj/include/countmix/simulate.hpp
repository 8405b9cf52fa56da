#pragma once

#include "countmix/data.hpp"

#include <cstdint>
#include <vector>

namespace countmix {

struct SimGroup {
  int mu = 0;      // covariate mean
  int lambda = 0;  // Poisson mean
};

struct SimResult {
  Dataset data;
  std::vector<int> labels;  // 0-based generating group per row
  std::vector<SimGroup> groups;
};

/// Groups of (x, y) with x ~ N(mu_g, 1) and y ~ Poisson(lambda_g), where
/// mu_g and lambda_g are uniform integers in 1..50. With `reject_close`,
/// lambda draws within 5 of an earlier group are redrawn.
SimResult gen_grouped_sim(std::uint64_t seed, int n_per_group = 50, bool reject_close = true,
                        int groups = 4);

struct CovariateDist {
  enum class Kind { Normal, Uniform, Bernoulli };
  std::string name;
  Kind kind = Kind::Normal;
  double a = 0;  // mean | lower | probability
  double b = 1;  // sd   | upper | unused
};

struct ComponentTruth {
  double pi = 1;
  Vector beta;       // intercept first
  double alpha = 0;  // 0: Poisson
};

struct MixtureSpec {
  std::vector<ComponentTruth> components;
  std::vector<CovariateDist> covariates;
};

/// Draws a component per row from pi, covariates from their distributions and
/// y from Poisson(exp(x'beta_g)) or, when alpha_g > 0, a Gamma-Poisson NB-2.
SimResult gen_regression_mixture(const MixtureSpec& spec, Eigen::Index n, std::uint64_t seed);

}  // namespace countmix
