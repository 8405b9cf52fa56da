#include "countmix/ga.hpp"

#include "countmix/errors.hpp"
#include "countmix/parallel.hpp"
#include "countmix/rng.hpp"

#include <boost/random/bernoulli_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace countmix {

namespace {
constexpr double kUnfit = std::numeric_limits<double>::infinity();
}

void GaConfig::validate(std::size_t p) const {
  if (p < 1) throw SpecError("GA needs at least one covariate");
  if (pop_size < 4) throw SpecError("pop_size must be at least 4");
  if (elitism < 0 || elitism >= pop_size) throw SpecError("elitism must lie in [0, pop_size)");
  if (generations < 1 || runs < 1) throw SpecError("generations and runs must be positive");
  auto rate_ok = [](double r) { return r >= 0.0 && r <= 1.0; };
  if (!rate_ok(crossover_rate) || (mutation_rate && !rate_ok(*mutation_rate)))
    throw SpecError("GA rates must lie in [0, 1]");
  if (G && *G < 1) throw SpecError("G must be at least 1");
  for (const auto& m : initial_population)
    if (m.size() != p) throw DimensionError("initial chromosome length does not match p");
}

FitnessCache::FitnessCache(const Dataset& d, int G, Family family, Criterion criterion,
                           std::uint64_t seed, int restarts, bool resweep, int G_max)
    : data_(d),
      G_(G),
      family_(family),
      criterion_(criterion),
      seed_(seed),
      restarts_(restarts),
      resweep_(resweep),
      G_max_(G_max) {}

std::optional<ScoreRow> FitnessCache::compute(const CovariateMask& mask) const {
  try {
    const Dataset sub = apply_mask(data_, mask);
    if (resweep_) {
      SweepOptions so;
      so.G_max = G_max_;
      so.seed = seed_;
      so.restarts = restarts_;
      so.family = family_;
      const SweepResult res = sweep(sub, so);
      const int G = select_best(res.rows, criterion_);
      return res.rows[static_cast<std::size_t>(G - 1)];
    }
    const MixtureModel m = em_fit(sub, G_, family_, seed_, restarts_);
    if (m.collapsed_from) return std::nullopt;
    return score_model(m, sub);
  } catch (const DimensionError&) {
    return std::nullopt;
  } catch (const ComputeError&) {
    return std::nullopt;
  }
}

std::optional<ScoreRow> FitnessCache::row(const CovariateMask& mask) {
  const std::string key = mask.bitstring();
  {
    std::lock_guard lock(mutex_);
    ++lookups_;
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  auto value = compute(mask);
  std::lock_guard lock(mutex_);
  return cache_.emplace(key, std::move(value)).first->second;
}

double FitnessCache::operator()(const CovariateMask& mask) {
  const auto r = row(mask);
  if (!r) return kUnfit;
  const auto v = r->value(criterion_);
  return v && std::isfinite(*v) ? *v : kUnfit;
}

std::size_t FitnessCache::distinct_evaluations() const {
  std::lock_guard lock(mutex_);
  return cache_.size();
}

std::size_t FitnessCache::lookups() const {
  std::lock_guard lock(mutex_);
  return lookups_;
}

double fitness(const CovariateMask& mask, FitnessCache& cache) { return cache(mask); }

namespace {

struct Scored {
  CovariateMask mask;
  double fitness;
};

bool fitter(const Scored& a, const Scored& b) {
  if (a.fitness != b.fitness) return a.fitness < b.fitness;
  return a.mask < b.mask;
}

}  // namespace

CovariateMask evolve_run(FitnessCache& cache, std::size_t p, const GaConfig& cfg, int run) {
  auto rng = make_rng(cfg.seed, 0x6a00 + static_cast<std::uint64_t>(run));
  const double mutation = cfg.mutation_rate.value_or(1.0 / static_cast<double>(p));
  boost::random::bernoulli_distribution<double> coin(0.5);
  boost::random::bernoulli_distribution<double> do_cross(cfg.crossover_rate);
  boost::random::bernoulli_distribution<double> flip(mutation);
  boost::random::uniform_int_distribution<int> pick(0, cfg.pop_size - 1);

  std::vector<CovariateMask> pop;
  for (const auto& m : cfg.initial_population) {
    if (static_cast<int>(pop.size()) == cfg.pop_size) break;
    pop.push_back(m);
  }
  while (static_cast<int>(pop.size()) < cfg.pop_size) {
    std::vector<bool> bits(p);
    for (std::size_t j = 0; j < p; ++j) bits[j] = coin(rng);
    pop.emplace_back(std::move(bits));
  }

  std::optional<Scored> best;
  std::vector<Scored> scored(pop.size());
  for (int gen = 0;; ++gen) {
    for (std::size_t i = 0; i < pop.size(); ++i) {
      scored[i] = {pop[i], cache(pop[i])};
      if (!best || fitter(scored[i], *best)) best = scored[i];
    }
    if (gen + 1 >= cfg.generations) break;

    std::vector<Scored> ranked = scored;
    std::sort(ranked.begin(), ranked.end(), fitter);
    std::vector<CovariateMask> next;
    for (int e = 0; e < cfg.elitism; ++e) next.push_back(ranked[static_cast<std::size_t>(e)].mask);

    auto tournament = [&]() -> const CovariateMask& {
      const auto& a = scored[static_cast<std::size_t>(pick(rng))];
      const auto& b = scored[static_cast<std::size_t>(pick(rng))];
      return fitter(a, b) ? a.mask : b.mask;
    };
    while (static_cast<int>(next.size()) < cfg.pop_size) {
      const CovariateMask& mum = tournament();
      const CovariateMask& dad = tournament();
      CovariateMask child = mum;
      if (do_cross(rng))
        for (std::size_t j = 0; j < p; ++j) child.set(j, coin(rng) ? mum[j] : dad[j]);
      for (std::size_t j = 0; j < p; ++j)
        if (flip(rng)) child.set(j, !child[j]);
      next.push_back(std::move(child));
    }
    pop = std::move(next);
  }
  return best->mask;
}

std::vector<SubsetRecord> aggregate_winners(std::span<const CovariateMask> winners,
                                            FitnessCache& cache) {
  std::map<CovariateMask, int> counts;
  for (const auto& w : winners) ++counts[w];
  std::vector<SubsetRecord> out;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& [mask, wins] : counts) {
    SubsetRecord rec;
    rec.mask = mask;
    rec.wins = wins;
    rec.runs = static_cast<int>(winners.size());
    rec.fitness = cache(mask);
    const auto row = cache.row(mask);
    rec.aic = row && row->ok ? row->aic : nan;
    rec.caic = row && row->ok ? row->caic : nan;
    rec.sbc = row && row->ok ? row->sbc : nan;
    out.push_back(std::move(rec));
  }
  std::sort(out.begin(), out.end(), [](const SubsetRecord& a, const SubsetRecord& b) {
    if (a.wins != b.wins) return a.wins > b.wins;
    if (a.fitness != b.fitness) return a.fitness < b.fitness;
    return a.mask < b.mask;
  });
  return out;
}

GaResult evolve(const Dataset& d, const GaConfig& cfg) {
  const auto p = static_cast<std::size_t>(d.p());
  cfg.validate(p);
  GaResult out;
  out.family = cfg.family ? *cfg.family : choose_family(d, cfg.alpha_threshold, &out.warnings);
  if (cfg.G) {
    out.G = *cfg.G;
  } else {
    SweepOptions so;
    so.G_max = cfg.G_max;
    so.seed = cfg.seed;
    so.restarts = cfg.restarts;
    so.family = out.family;
    const SweepResult full = sweep(d, so);
    out.G = select_best(full.rows, cfg.criterion);
  }

  FitnessCache cache(d, out.G, out.family, cfg.criterion, cfg.seed, cfg.restarts, cfg.resweep,
                     cfg.G_max);
  out.run_winners.resize(static_cast<std::size_t>(cfg.runs));
  parallel_for(out.run_winners.size(), [&](std::size_t r) {
    out.run_winners[r] = evolve_run(cache, p, cfg, static_cast<int>(r));
  });
  out.records = aggregate_winners(out.run_winners, cache);
  out.distinct_evaluations = cache.distinct_evaluations();
  return out;
}

}  // namespace countmix
