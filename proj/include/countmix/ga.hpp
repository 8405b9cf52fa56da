#pragma once

#include "countmix/selection.hpp"

#include <mutex>
#include <unordered_map>

namespace countmix {

struct GaConfig {
  int pop_size = 30;
  int generations = 40;
  double crossover_rate = 0.8;
  std::optional<double> mutation_rate;  // default 1/p
  int elitism = 2;
  Criterion criterion = Criterion::CAIC;
  std::optional<int> G;  // nullopt: chosen by a sweep of the full model
  int runs = 200;
  std::uint64_t seed = 1;
  bool resweep = false;  // re-select G for every mask
  int restarts = 5;
  int G_max = 5;
  std::optional<Family> family;
  double alpha_threshold = 0.05;
  // Optional starting population (padded with random chromosomes).
  std::vector<CovariateMask> initial_population;

  void validate(std::size_t p) const;
};

/// Memoized mask -> ScoreRow lookups for one (data, G, family) setting.
/// Safe to share between threads.
class FitnessCache {
 public:
  FitnessCache(const Dataset& d, int G, Family family, Criterion criterion, std::uint64_t seed,
               int restarts, bool resweep = false, int G_max = 5);

  /// Criterion value for the masked model; +inf when the fit fails or the
  /// criterion is unavailable.
  double operator()(const CovariateMask& mask);
  std::optional<ScoreRow> row(const CovariateMask& mask);

  std::size_t distinct_evaluations() const;
  std::size_t lookups() const;

 private:
  std::optional<ScoreRow> compute(const CovariateMask& mask) const;

  const Dataset& data_;
  int G_;
  Family family_;
  Criterion criterion_;
  std::uint64_t seed_;
  int restarts_;
  bool resweep_;
  int G_max_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, std::optional<ScoreRow>> cache_;
  std::size_t lookups_ = 0;
};

double fitness(const CovariateMask& mask, FitnessCache& cache);

struct SubsetRecord {
  CovariateMask mask;
  double aic = 0;
  double caic = 0;
  double sbc = 0;
  double fitness = 0;
  int wins = 0;
  int runs = 0;

  double rel_freq() const { return runs ? static_cast<double>(wins) / runs : 0.0; }
};

struct GaResult {
  std::vector<SubsetRecord> records;  // by rel_freq desc, then fitness asc
  std::vector<CovariateMask> run_winners;
  int G = 1;
  Family family = Family::Poisson;
  std::size_t distinct_evaluations = 0;
  std::vector<std::string> warnings;
};

// One GA run; returns the best mask ever evaluated (ties: smaller bitstring).
CovariateMask evolve_run(FitnessCache& cache, std::size_t p, const GaConfig& cfg, int run);

GaResult evolve(const Dataset& d, const GaConfig& cfg);

// Tallies run winners into SubsetRecords.
std::vector<SubsetRecord> aggregate_winners(std::span<const CovariateMask> winners,
                                            FitnessCache& cache);

}  // namespace countmix
