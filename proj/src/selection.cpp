#include "countmix/selection.hpp"

#include "countmix/errors.hpp"
#include "countmix/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace countmix {

Family choose_family(const Dataset& d, double threshold, std::vector<std::string>* warnings) {
  if (d.n() < d.p() + 2) throw DimensionError("family gate needs at least p+2 rows");
  try {
    const GlmFit fit = fit_nb2(d);
    return fit.alpha < threshold ? Family::Poisson : Family::NB2;
  } catch (const ComputeError& e) {
    const double ratio = dispersion_stat(d);
    if (warnings)
      warnings->push_back(std::string("NB-2 gate fit failed (") + e.what() +
                          "); using variance/mean ratio " + std::to_string(ratio));
    return ratio > 1.5 ? Family::NB2 : Family::Poisson;
  }
}

int select_best(std::span<const ScoreRow> rows, Criterion c) {
  int best = -1;
  double best_value = std::numeric_limits<double>::infinity();
  for (const auto& r : rows) {
    const auto v = r.value(c);
    if (!v || !std::isfinite(*v)) continue;
    if (best < 0 || *v < best_value || (*v == best_value && r.G < best)) {
      best = r.G;
      best_value = *v;
    }
  }
  if (best < 0) throw NoScoreError(std::string("no row has a ") + std::string(to_string(c)) + " score");
  return best;
}

const MixtureModel& SweepResult::model(int G) const {
  if (G < 1 || G > static_cast<int>(models.size()) || !models[static_cast<std::size_t>(G - 1)])
    throw InputError("no fitted model for G=" + std::to_string(G));
  return *models[static_cast<std::size_t>(G - 1)];
}

SweepResult sweep(const Dataset& d, const SweepOptions& opt) {
  if (opt.G_max < 1) throw InputError("G_max must be at least 1");
  SweepResult out;
  out.family_used = opt.family ? *opt.family : choose_family(d, opt.alpha_threshold, &out.warnings);

  const auto count = static_cast<std::size_t>(opt.G_max);
  out.rows.resize(count);
  out.models.resize(count);
  std::vector<std::string> errors(count);
  parallel_for(count, [&](std::size_t k) {
    const int G = static_cast<int>(k) + 1;
    ScoreRow& row = out.rows[k];
    row.G = G;
    try {
      MixtureModel m = em_fit(d, G, out.family_used, opt.seed, opt.restarts, opt.em);
      if (m.collapsed_from) {
        row.ok = false;
        row.note = "collapsed to G=" + std::to_string(m.G());
      } else {
        row = score_model(m, d);
        out.models[k] = std::move(m);
      }
    } catch (const Error& e) {
      row.ok = false;
      row.note = e.what();
    }
    if (!row.ok) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      row.logL = row.aic = row.sbc = row.caic = nan;
      row.n_k = count_params(G, static_cast<int>(d.p()), out.family_used);
      errors[k] = "G=" + std::to_string(G) + ": " + row.note;
    }
  });

  for (const auto& e : errors)
    if (!e.empty()) out.warnings.push_back(e);
  if (std::none_of(out.rows.begin(), out.rows.end(), [](const ScoreRow& r) { return r.ok; })) {
    std::string msg = "every G failed:";
    for (const auto& e : errors) msg += " [" + e + "]";
    throw SweepError(msg);
  }
  for (Criterion c : {Criterion::AIC, Criterion::SBC, Criterion::CAIC, Criterion::ICOMP}) {
    try {
      out.best[c] = select_best(out.rows, c);
    } catch (const NoScoreError&) {
    }
  }
  return out;
}

}  // namespace countmix
