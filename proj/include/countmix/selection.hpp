#pragma once

#include "countmix/criteria.hpp"

#include <map>
#include <span>

namespace countmix {

/// Poisson when the fitted single-component NB-2 dispersion is strictly below
/// `threshold`, NB-2 otherwise. If the NB-2 fit fails, falls back to the
/// variance/mean ratio (> 1.5 means NB-2) and records a warning.
Family choose_family(const Dataset& d, double threshold = 0.05,
                     std::vector<std::string>* warnings = nullptr);

/// argmin of the criterion over rows where it is available; ties go to the
/// smaller G. Throws NoScoreError when no row has the criterion.
int select_best(std::span<const ScoreRow> rows, Criterion c);

struct SweepOptions {
  int G_max = 5;
  std::uint64_t seed = 1;
  int restarts = 5;
  std::optional<Family> family;  // nullopt: choose_family
  double alpha_threshold = 0.05;
  EmOptions em;
};

struct SweepResult {
  std::vector<ScoreRow> rows;  // one per G = 1..G_max
  Family family_used = Family::Poisson;
  std::map<Criterion, int> best;
  std::vector<std::optional<MixtureModel>> models;  // index G-1
  std::vector<std::string> warnings;

  const MixtureModel& model(int G) const;
};

SweepResult sweep(const Dataset& d, const SweepOptions& opt);

}  // namespace countmix
