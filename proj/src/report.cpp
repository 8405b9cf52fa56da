#include "countmix/report.hpp"

#include "countmix/errors.hpp"
#include "countmix/format.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace countmix {

namespace {

constexpr double kConstantVariance = 1e-12;

std::string cell(double v) { return std::isfinite(v) ? format_shortest(v) : ""; }
std::string cell(const std::optional<double>& v) { return v ? cell(*v) : ""; }

std::string fixed2(double v) { return std::isfinite(v) ? format_fixed(v, 2) : "--"; }

nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}
nlohmann::json number_or_null(const std::optional<double>& v) {
  return v ? number_or_null(*v) : nlohmann::json(nullptr);
}

}  // namespace

WaldInterval wald_interval(double beta, double se, double z) {
  return {beta - z * se, beta + z * se};
}

std::vector<ComponentTable> report_components(const MixtureModel& m, const Dataset& d) {
  const Eigen::Index k = d.X.cols();
  // IFIM standard errors, laid out like pack_parameters().
  std::optional<Vector> ifim_se;
  try {
    const Matrix info = observed_info(m, d);
    if (icomp(m.logL, info)) {
      const Matrix cov = info.llt().solve(Matrix::Identity(info.rows(), info.cols()));
      if (cov.diagonal().minCoeff() > 0) ifim_se = cov.diagonal().array().sqrt();
    }
  } catch (const Error&) {
  }

  std::vector<ComponentTable> out;
  Eigen::Index pos = 0;
  for (int g = 0; g < m.G(); ++g) {
    const auto& c = m.components[static_cast<std::size_t>(g)];
    const Vector& w = m.responsibilities.col(g);
    const double size = w.sum();
    ComponentTable t;
    t.component = g + 1;
    t.pi = c.pi;
    t.alpha = c.alpha;
    t.se_source = ifim_se ? "ifim" : "component";
    std::vector<CoefficientRow> rows(static_cast<std::size_t>(k));
    for (Eigen::Index j = 0; j < k; ++j) {
      const bool active = c.active.empty() || c.active[static_cast<std::size_t>(j)];
      CoefficientRow& r = rows[static_cast<std::size_t>(j)];
      r.name = j == 0 ? "Int" : d.names[static_cast<std::size_t>(j - 1)];
      double se = std::numeric_limits<double>::quiet_NaN();
      if (active) se = ifim_se ? (*ifim_se)[pos++] : c.se[j];
      bool constant = false;
      if (j > 0 && size > 0) {
        const double mean = w.dot(d.X.col(j)) / size;
        constant = (w.array() * (d.X.col(j).array() - mean).square()).sum() / size < kConstantVariance;
      }
      r.dropped = !active || constant;
      r.beta = c.beta[j];
      r.se = se;
      const auto ci = wald_interval(r.beta, r.se);
      r.lower = ci.lower;
      r.upper = ci.upper;
    }
    if (dispersion_free(m, c)) ++pos;
    // Covariates first, intercept last.
    std::rotate(rows.begin(), rows.begin() + 1, rows.end());
    t.rows = std::move(rows);
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<ComponentSummary> component_summaries(const MixtureModel& m, const Dataset& d) {
  const auto labels = map_assignments(m);
  std::vector<ComponentSummary> out;
  for (int g = 0; g < m.G(); ++g) {
    ComponentSummary s;
    s.component = g + 1;
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == g) rows.push_back(static_cast<Eigen::Index>(i));
    s.size = rows.size();
    s.empty = rows.empty();
    if (!s.empty) s.stats = summary_stats(select_rows(d, rows));
    out.push_back(std::move(s));
  }
  return out;
}

std::string scores_csv(std::span<const ScoreRow> rows) {
  std::ostringstream out;
  out << "G,logL,n_k,AIC,SBC,CAIC,ICOMP\n";
  for (const auto& r : rows) {
    out << r.G << ',' << cell(r.logL) << ',' << r.n_k << ',' << cell(r.value(Criterion::AIC)) << ','
        << cell(r.value(Criterion::SBC)) << ',' << cell(r.value(Criterion::CAIC)) << ','
        << cell(r.value(Criterion::ICOMP)) << '\n';
  }
  return out.str();
}

std::string ga_csv(std::span<const SubsetRecord> records) {
  std::ostringstream out;
  out << "mask,rel_freq,AIC,CAIC,SBC\n";
  for (const auto& r : records)
    out << '"' << r.mask.label(",") << "\"," << format_shortest(r.rel_freq()) << ',' << cell(r.aic)
        << ',' << cell(r.caic) << ',' << cell(r.sbc) << '\n';
  return out.str();
}

std::string components_csv(std::span<const ComponentTable> tables) {
  std::ostringstream out;
  out << "component,pi,alpha,variable,beta,se,lower,upper\n";
  for (const auto& t : tables)
    for (const auto& r : t.rows) {
      out << t.component << ',' << format_shortest(t.pi) << ',' << format_shortest(t.alpha) << ','
          << r.name << ',';
      if (r.dropped)
        out << ",,,\n";
      else
        out << cell(r.beta) << ',' << cell(r.se) << ',' << cell(r.lower) << ',' << cell(r.upper) << '\n';
    }
  return out.str();
}

std::string stats_csv(std::span<const ColumnStats> stats) {
  std::ostringstream out;
  out << "variable,mean,sd,min,max\n";
  for (const auto& s : stats)
    out << s.name << ',' << format_shortest(s.mean) << ',' << format_shortest(s.sd) << ','
        << format_shortest(s.min) << ',' << format_shortest(s.max) << '\n';
  return out.str();
}

std::string summaries_csv(std::span<const ComponentSummary> summaries) {
  std::ostringstream out;
  out << "component,size,variable,mean,sd,min,max\n";
  for (const auto& c : summaries)
    for (const auto& s : c.stats)
      out << c.component << ',' << c.size << ',' << s.name << ',' << format_shortest(s.mean) << ','
          << format_shortest(s.sd) << ',' << format_shortest(s.min) << ','
          << format_shortest(s.max) << '\n';
  return out.str();
}

std::string render_score_table(std::span<const ScoreRow> rows) {
  std::ostringstream out;
  out << std::left << std::setw(4) << "G" << std::right << std::setw(12) << "logL" << std::setw(6)
      << "n_k" << std::setw(12) << "AIC" << std::setw(12) << "SBC" << std::setw(12) << "CAIC"
      << std::setw(12) << "ICOMP" << '\n';
  auto col = [](const std::optional<double>& v) { return v ? fixed2(*v) : std::string("--"); };
  for (const auto& r : rows) {
    out << std::left << std::setw(4) << r.G << std::right << std::setw(12) << fixed2(r.logL)
        << std::setw(6) << r.n_k << std::setw(12) << col(r.value(Criterion::AIC)) << std::setw(12)
        << col(r.value(Criterion::SBC)) << std::setw(12) << col(r.value(Criterion::CAIC))
        << std::setw(12) << col(r.value(Criterion::ICOMP));
    if (!r.note.empty()) out << "  " << r.note;
    out << '\n';
  }
  return out.str();
}

std::string render_ga_table(std::span<const SubsetRecord> records) {
  std::ostringstream out;
  out << std::left << std::setw(24) << "Subset" << std::right << std::setw(11) << "Rel. freq."
      << std::setw(10) << "AIC" << std::setw(10) << "CAIC" << std::setw(10) << "SBC" << '\n';
  for (const auto& r : records)
    out << std::left << std::setw(24) << r.mask.label() << std::right << std::setw(11)
        << (format_fixed(100.0 * r.rel_freq(), 2) + "%") << std::setw(10) << fixed2(r.aic)
        << std::setw(10) << fixed2(r.caic) << std::setw(10) << fixed2(r.sbc) << '\n';
  return out.str();
}

std::string render_components(std::span<const ComponentTable> tables) {
  std::ostringstream out;
  for (const auto& t : tables) {
    out << "Component " << t.component << " (pi = " << format_fixed(t.pi, 3);
    if (t.alpha > 0) out << ", alpha = " << format_fixed(t.alpha, 4);
    out << ")\n";
    out << std::left << std::setw(12) << "Variable" << std::right << std::setw(10) << "beta"
        << std::setw(10) << "S. E." << std::setw(10) << "2.5%" << std::setw(10) << "97.5%" << '\n';
    for (const auto& r : t.rows) {
      out << std::left << std::setw(12) << r.name << std::right;
      if (r.dropped)
        out << std::setw(10) << "--" << std::setw(10) << "--" << std::setw(10) << "--"
            << std::setw(10) << "--";
      else
        out << std::setw(10) << fixed2(r.beta) << std::setw(10) << fixed2(r.se) << std::setw(10)
            << fixed2(r.lower) << std::setw(10) << fixed2(r.upper);
      out << '\n';
    }
    out << '\n';
  }
  return out.str();
}

std::string render_stats(std::span<const ColumnStats> stats) {
  std::ostringstream out;
  out << std::left << std::setw(12) << "Name" << std::right << std::setw(12) << "Mean"
      << std::setw(12) << "St. Dev." << std::setw(12) << "Min" << std::setw(12) << "Max" << '\n';
  for (const auto& s : stats)
    out << std::left << std::setw(12) << s.name << std::right << std::setw(12) << fixed2(s.mean)
        << std::setw(12) << fixed2(s.sd) << std::setw(12) << fixed2(s.min) << std::setw(12)
        << fixed2(s.max) << '\n';
  return out.str();
}

nlohmann::json to_json(const ScoreRow& r) {
  return {{"G", r.G},
          {"ok", r.ok},
          {"converged", r.converged},
          {"logL", number_or_null(r.logL)},
          {"n_k", r.n_k},
          {"AIC", number_or_null(r.value(Criterion::AIC))},
          {"SBC", number_or_null(r.value(Criterion::SBC))},
          {"CAIC", number_or_null(r.value(Criterion::CAIC))},
          {"ICOMP", number_or_null(r.value(Criterion::ICOMP))},
          {"ifim_condition", number_or_null(r.ifim_condition)},
          {"note", r.note}};
}

nlohmann::json to_json(const SubsetRecord& r) {
  return {{"mask", r.mask.indices()},  {"label", r.mask.label()},
          {"wins", r.wins},            {"runs", r.runs},
          {"rel_freq", r.rel_freq()},  {"AIC", number_or_null(r.aic)},
          {"CAIC", number_or_null(r.caic)}, {"SBC", number_or_null(r.sbc)},
          {"fitness", number_or_null(r.fitness)}};
}

nlohmann::json to_json(const ComponentTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows) {
    if (r.dropped)
      rows.push_back({{"variable", r.name}, {"dropped", true}});
    else
      rows.push_back({{"variable", r.name},
                      {"dropped", false},
                      {"beta", number_or_null(r.beta)},
                      {"se", number_or_null(r.se)},
                      {"lower", number_or_null(r.lower)},
                      {"upper", number_or_null(r.upper)}});
  }
  return {{"component", t.component}, {"pi", t.pi},   {"alpha", t.alpha},
          {"se_source", t.se_source},  {"rows", rows}};
}

nlohmann::json to_json(const ColumnStats& s) {
  return {{"variable", s.name}, {"mean", s.mean}, {"sd", s.sd}, {"min", s.min}, {"max", s.max}};
}

nlohmann::json to_json(const ComponentSummary& s) {
  nlohmann::json stats = nlohmann::json::array();
  for (const auto& c : s.stats) stats.push_back(to_json(c));
  return {{"component", s.component}, {"size", s.size}, {"empty", s.empty}, {"stats", stats}};
}

}  // namespace countmix
