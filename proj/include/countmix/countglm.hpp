#pragma once

#include "countmix/data.hpp"
#include "countmix/types.hpp"

namespace countmix {

struct GlmOptions {
  double tol = 1e-8;    // relative log-likelihood change
  double gtol = 1e-6;   // max-norm of the score
  int max_iter = 100;
  int max_halvings = 20;
  double alpha_min = 1e-8;
  double alpha_max = 1e4;
  bool standard_errors = true;  // off inside EM, where only the last M-step needs them
};

struct GlmFit {
  Family family = Family::Poisson;
  Vector beta;
  double alpha = 0;  // exactly 0 for the Poisson family
  Vector se;         // NaN where the information is singular
  double logL = 0;
  bool converged = false;
  int iterations = 0;
  bool alpha_at_bound = false;
};

// Weight vectors are optional throughout: an empty vector means all ones.

double poisson_loglik(const Vector& beta, const Dataset& d, const Vector& w = Vector());
// Score with respect to beta.
Vector poisson_gradient(const Vector& beta, const Dataset& d, const Vector& w = Vector());

double nb2_loglik(const Vector& beta, double alpha, const Dataset& d, const Vector& w = Vector());
// Score with respect to (beta, alpha); length p+2, alpha last.
Vector nb2_gradient(const Vector& beta, double alpha, const Dataset& d, const Vector& w = Vector());

// Throws SingularDesignError naming the dependent columns when X, restricted
// to rows with weight above 1e-10, is rank deficient.
void check_design_rank(const Dataset& d, const Vector& w = Vector());

GlmFit fit_poisson(const Dataset& d, const Vector& w = Vector(), const Vector& init = Vector(),
                   const GlmOptions& opt = {});

struct Nb2Start {
  Vector beta;
  double alpha = 0;  // <= 0: moment estimate
};

GlmFit fit_nb2(const Dataset& d, const Vector& w = Vector(), const Nb2Start& init = {},
               const GlmOptions& opt = {});

inline GlmFit fit_glm(Family family, const Dataset& d, const Vector& w = Vector(),
                      const GlmOptions& opt = {}) {
  return family == Family::Poisson ? fit_poisson(d, w, Vector(), opt) : fit_nb2(d, w, {}, opt);
}

// Standard errors of beta at a fitted point, from the observed information
// (over beta and log alpha for NB-2 unless alpha sits on a bound).
Vector standard_errors(const Dataset& d, const Vector& w, const GlmFit& fit);

/// Sample variance over sample mean of the outcome. +inf when the mean is 0.
double dispersion_stat(const Dataset& d);

}  // namespace countmix
