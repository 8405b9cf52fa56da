#pragma once

#include "countmix/ga.hpp"

#include <json.hpp>

namespace countmix {

struct CoefficientRow {
  std::string name;  // covariate label, "Int" for the intercept
  bool dropped = false;
  double beta = 0;
  double se = 0;
  double lower = 0;
  double upper = 0;
};

struct ComponentTable {
  int component = 0;  // 1-based
  double pi = 0;
  double alpha = 0;
  std::string se_source;  // "ifim" or "component"
  std::vector<CoefficientRow> rows;  // covariates first, intercept last
};

struct WaldInterval {
  double lower;
  double upper;
};

WaldInterval wald_interval(double beta, double se, double z = 1.96);

/// Per-component coefficients with Wald intervals. Standard errors come from
/// the mixture IFIM when it is positive definite, otherwise from each
/// component's weighted fit.
std::vector<ComponentTable> report_components(const MixtureModel& m, const Dataset& d);

struct ComponentSummary {
  int component = 0;  // 1-based
  std::size_t size = 0;
  bool empty = true;
  std::vector<ColumnStats> stats;
};

std::vector<ComponentSummary> component_summaries(const MixtureModel& m, const Dataset& d);

// CSV sinks.
std::string scores_csv(std::span<const ScoreRow> rows);
std::string ga_csv(std::span<const SubsetRecord> records);
std::string components_csv(std::span<const ComponentTable> tables);
std::string summaries_csv(std::span<const ComponentSummary> summaries);
std::string stats_csv(std::span<const ColumnStats> stats);

// Fixed-width text tables for the terminal.
std::string render_score_table(std::span<const ScoreRow> rows);
std::string render_ga_table(std::span<const SubsetRecord> records);
std::string render_components(std::span<const ComponentTable> tables);
std::string render_stats(std::span<const ColumnStats> stats);

nlohmann::json to_json(const ScoreRow& row);
nlohmann::json to_json(const SubsetRecord& rec);
nlohmann::json to_json(const ComponentTable& table);
nlohmann::json to_json(const ComponentSummary& summary);
nlohmann::json to_json(const ColumnStats& stats);

}  // namespace countmix
