#include "countmix/cli.hpp"

#include "countmix/errors.hpp"
#include "countmix/format.hpp"
#include "countmix/report.hpp"
#include "countmix/rng.hpp"
#include "countmix/simulate.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <map>
#include <ostream>
#include <random>

namespace countmix::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct DataFlags {
  std::string data;
  std::string outcome;
  std::vector<std::string> covariates;
  bool standardize = false;
};

struct FitFlags {
  std::optional<std::uint64_t> seed;
  int gmax = 5;
  std::string family = "auto";
  double alpha_threshold = 0.05;
  int restarts = 5;
  std::string out = "countmix_out";
};

struct GaFlags {
  std::string criterion = "caic";
  int runs = 200;
  int pop = 30;
  int gens = 40;
  std::optional<double> mut;
  double cx = 0.8;
  int elitism = 2;
  std::string g = "auto";
  std::string force_mask;
  bool resweep = false;
};

struct SimFlags {
  std::optional<std::uint64_t> seed;
  int groups = 4;
  int n_per_group = 50;
  bool no_reject = false;
  std::string spec;
  long n = 500;
  std::string out = "countmix_sim";
};

void add_data_flags(CLI::App* cmd, DataFlags& f) {
  cmd->add_option("--data", f.data, "CSV file with a header row")->required();
  cmd->add_option("--outcome", f.outcome, "Outcome (count) column")->required();
  cmd->add_option("--covariates", f.covariates, "Covariate columns")->delimiter(',')->required();
  cmd->add_flag("--standardize", f.standardize, "Centre and scale covariates");
}

void add_fit_flags(CLI::App* cmd, FitFlags& f) {
  cmd->add_option("--seed", f.seed, "Random seed (drawn and recorded when absent)");
  cmd->add_option("--gmax", f.gmax, "Largest number of components")->check(CLI::Range(1, 5));
  cmd->add_option("--family", f.family, "auto, poisson or nb2")
      ->check(CLI::IsMember({"auto", "poisson", "nb2"}));
  cmd->add_option("--alpha-threshold", f.alpha_threshold, "Overdispersion gate on fitted alpha");
  cmd->add_option("--restarts", f.restarts, "EM restarts per G")->check(CLI::PositiveNumber);
  cmd->add_option("--out", f.out, "Output directory");
}

Dataset load(const DataFlags& f) {
  Dataset d = load_csv(f.data, f.outcome, f.covariates);
  return f.standardize ? standardize(d) : d;
}

std::optional<Family> family_flag(const std::string& s) {
  if (s == "auto") return std::nullopt;
  return parse_family(s);
}

std::uint64_t resolve_seed(std::optional<std::uint64_t>& seed, std::vector<std::string>& argv) {
  if (!seed) {
    std::random_device rd;
    seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    argv.push_back("--seed");
    argv.push_back(std::to_string(*seed));
  }
  return *seed;
}

json invocation(const std::string& command, const std::vector<std::string>& argv,
                std::uint64_t seed, const json& flags) {
  return {{"command", command},
          {"argv", argv},
          {"flags", flags},
          {"seed", seed},
          {"generator", kGeneratorId},
          {"version", COUNTMIX_VERSION}};
}

// Writes every file only after all of them have been produced.
void write_outputs(const fs::path& dir, const std::map<std::string, std::string>& files) {
  fs::create_directories(dir);
  for (const auto& [name, contents] : files) write_file_atomic(dir / name, contents);
}

json data_json(const DataFlags& f, const Dataset& d) {
  return {{"path", f.data}, {"outcome", f.outcome}, {"covariates", f.covariates},
          {"standardize", f.standardize}, {"n", d.n()}, {"p", d.p()}};
}

int cmd_sweep(const DataFlags& df, FitFlags& ff, const std::string& criterion_name,
              std::vector<std::string> argv, std::ostream& out) {
  const std::uint64_t seed = resolve_seed(ff.seed, argv);
  const Criterion criterion = parse_criterion(criterion_name);
  const auto family = family_flag(ff.family);
  const Dataset d = load(df);

  SweepOptions so;
  so.G_max = ff.gmax;
  so.seed = seed;
  so.restarts = ff.restarts;
  so.family = family;
  so.alpha_threshold = ff.alpha_threshold;
  const SweepResult res = sweep(d, so);

  json report;
  report["invocation"] = invocation("sweep", argv, seed,
                                    {{"gmax", ff.gmax}, {"family", ff.family},
                                     {"alpha_threshold", ff.alpha_threshold},
                                     {"restarts", ff.restarts}, {"criterion", criterion_name},
                                     {"out", ff.out}});
  report["data"] = data_json(df, d);
  report["family_used"] = to_string(res.family_used);
  report["score_table"] = json::array();
  for (const auto& r : res.rows) report["score_table"].push_back(to_json(r));
  json chosen = json::object();
  for (const auto& [c, G] : res.best) chosen[std::string(to_string(c))] = G;
  report["chosen"] = chosen;
  report["warnings"] = res.warnings;

  std::map<std::string, std::string> files;
  files["scores.csv"] = scores_csv(res.rows);
  std::string text = render_score_table(res.rows);
  if (auto it = res.best.find(criterion); it != res.best.end()) {
    const MixtureModel& m = res.model(it->second);
    const auto tables = report_components(m, d);
    const auto sums = component_summaries(m, d);
    report["reported_G"] = it->second;
    report["components"] = json::array();
    for (const auto& t : tables) report["components"].push_back(to_json(t));
    report["summaries"] = json::array();
    for (const auto& s : sums) report["summaries"].push_back(to_json(s));
    files["components.csv"] = components_csv(tables);
    files["summaries.csv"] = summaries_csv(sums);
    text += "\nComponents at G=" + std::to_string(it->second) + " (" +
            std::string(to_string(criterion)) + ")\n" + render_components(tables);
  }
  files["report.json"] = report.dump(2) + "\n";
  write_outputs(ff.out, files);
  out << "family: " << to_string(res.family_used) << "\n" << text;
  return kOk;
}

int cmd_ga(const DataFlags& df, FitFlags& ff, const GaFlags& gf, std::vector<std::string> argv,
           std::ostream& out) {
  const std::uint64_t seed = resolve_seed(ff.seed, argv);
  const Dataset d = load(df);
  const auto p = static_cast<std::size_t>(d.p());

  GaConfig cfg;
  cfg.pop_size = gf.pop;
  cfg.generations = gf.gens;
  cfg.crossover_rate = gf.cx;
  cfg.mutation_rate = gf.mut;
  cfg.elitism = gf.elitism;
  cfg.criterion = parse_criterion(gf.criterion);
  cfg.runs = gf.runs;
  cfg.seed = seed;
  cfg.resweep = gf.resweep;
  cfg.restarts = ff.restarts;
  cfg.G_max = ff.gmax;
  cfg.family = family_flag(ff.family);
  cfg.alpha_threshold = ff.alpha_threshold;
  if (gf.g != "auto") {
    try {
      cfg.G = std::stoi(gf.g);
    } catch (const std::exception&) {
      throw InputError("--g must be an integer or 'auto'");
    }
  }
  std::optional<CovariateMask> forced;
  if (!gf.force_mask.empty()) forced = CovariateMask::parse(gf.force_mask, p);
  cfg.validate(p);

  GaResult res;
  if (forced) {
    res.family = cfg.family ? *cfg.family : choose_family(d, cfg.alpha_threshold, &res.warnings);
    if (cfg.G) {
      res.G = *cfg.G;
    } else {
      SweepOptions so;
      so.G_max = cfg.G_max;
      so.seed = seed;
      so.restarts = cfg.restarts;
      so.family = res.family;
      res.G = select_best(sweep(d, so).rows, cfg.criterion);
    }
    FitnessCache cache(d, res.G, res.family, cfg.criterion, seed, cfg.restarts, cfg.resweep,
                       cfg.G_max);
    res.run_winners = {*forced};
    res.records = aggregate_winners(res.run_winners, cache);
    if (!cache.row(*forced)) throw ComputeError("forced mask could not be fitted");
  } else {
    res = evolve(d, cfg);
  }
  if (res.records.empty()) throw ComputeError("GA produced no winners");

  json report;
  report["invocation"] = invocation(
      "ga", argv, seed,
      {{"gmax", ff.gmax}, {"family", ff.family}, {"alpha_threshold", ff.alpha_threshold},
       {"restarts", ff.restarts}, {"criterion", gf.criterion}, {"runs", gf.runs},
       {"pop", gf.pop}, {"gens", gf.gens}, {"mut", cfg.mutation_rate.value_or(1.0 / p)},
       {"cx", gf.cx}, {"elitism", gf.elitism}, {"g", gf.g}, {"force_mask", gf.force_mask},
       {"resweep", gf.resweep}, {"out", ff.out}});
  report["data"] = data_json(df, d);
  report["family_used"] = to_string(res.family);
  report["G"] = res.G;
  report["ga_records"] = json::array();
  for (const auto& r : res.records) report["ga_records"].push_back(to_json(r));
  report["distinct_evaluations"] = res.distinct_evaluations;

  std::map<std::string, std::string> files;
  files["ga.csv"] = ga_csv(res.records);
  std::string text = render_ga_table(res.records);

  // Component tables for the winning mask.
  const CovariateMask& winner = res.records.front().mask;
  const Dataset sub = apply_mask(d, winner);
  try {
    const MixtureModel m = em_fit(sub, res.G, res.family, seed, cfg.restarts);
    const auto tables = report_components(m, sub);
    const auto sums = component_summaries(m, d);
    report["winner"] = {{"mask", winner.indices()}, {"score", to_json(score_model(m, sub))}};
    report["components"] = json::array();
    for (const auto& t : tables) report["components"].push_back(to_json(t));
    report["summaries"] = json::array();
    for (const auto& s : sums) report["summaries"].push_back(to_json(s));
    files["components.csv"] = components_csv(tables);
    files["summaries.csv"] = summaries_csv(sums);
    text += "\nComponents for subset " + winner.label() + " at G=" + std::to_string(res.G) +
            "\n" + render_components(tables);
  } catch (const ComputeError& e) {
    res.warnings.push_back(std::string("winner refit failed: ") + e.what());
  }
  report["warnings"] = res.warnings;
  files["report.json"] = report.dump(2) + "\n";
  write_outputs(ff.out, files);
  out << text;
  return kOk;
}

MixtureSpec load_mixture_spec(const std::string& path, long& n) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open spec file " + path);
  json j;
  try {
    in >> j;
    MixtureSpec spec;
    if (j.contains("n")) n = j.at("n").get<long>();
    for (const auto& c : j.at("components")) {
      ComponentTruth t;
      t.pi = c.at("pi").get<double>();
      const auto beta = c.at("beta").get<std::vector<double>>();
      t.beta = Eigen::Map<const Vector>(beta.data(), static_cast<Eigen::Index>(beta.size()));
      t.alpha = c.value("alpha", 0.0);
      spec.components.push_back(std::move(t));
    }
    for (const auto& c : j.value("covariates", json::array())) {
      CovariateDist dist;
      dist.name = c.value("name", "");
      const std::string kind = c.value("dist", "normal");
      if (kind == "normal") dist.kind = CovariateDist::Kind::Normal;
      else if (kind == "uniform") dist.kind = CovariateDist::Kind::Uniform;
      else if (kind == "bernoulli") dist.kind = CovariateDist::Kind::Bernoulli;
      else throw SpecError("unknown covariate distribution '" + kind + "'");
      dist.a = c.value("a", 0.0);
      dist.b = c.value("b", 1.0);
      spec.covariates.push_back(std::move(dist));
    }
    return spec;
  } catch (const json::exception& e) {
    throw SpecError(std::string("malformed spec file: ") + e.what());
  }
}

int cmd_simulate(SimFlags& sf, std::vector<std::string> argv, std::ostream& out) {
  const std::uint64_t seed = resolve_seed(sf.seed, argv);
  SimResult sim;
  json meta;
  if (sf.spec.empty()) {
    if (sf.groups < 1 || sf.groups > 5) throw SpecError("--groups must lie in 1..5");
    sim = gen_grouped_sim(seed, sf.n_per_group, !sf.no_reject, sf.groups);
    json groups = json::array();
    for (const auto& g : sim.groups) groups.push_back({{"mu", g.mu}, {"lambda", g.lambda}});
    meta["mode"] = "grouped";
    meta["spec"] = {{"groups", groups}, {"n_per_group", sf.n_per_group},
                    {"reject_close", !sf.no_reject}};
  } else {
    long n = sf.n;
    const MixtureSpec spec = load_mixture_spec(sf.spec, n);
    sim = gen_regression_mixture(spec, n, seed);
    std::ifstream in(sf.spec);
    meta["mode"] = "regression";
    meta["spec"] = json::parse(in);
    meta["spec"]["n"] = n;
  }
  meta["invocation"] = invocation("simulate", argv, seed, {{"out", sf.out}});

  std::string labels = "label\n";
  for (int l : sim.labels) labels += std::to_string(l + 1) + "\n";
  write_outputs(sf.out, {{"data.csv", to_csv(sim.data)},
                         {"labels.csv", labels},
                         {"meta.json", meta.dump(2) + "\n"}});
  out << "wrote " << sim.data.n() << " rows to " << (fs::path(sf.out) / "data.csv").string() << "\n";
  return kOk;
}

int cmd_summary(const DataFlags& df, const std::string& out_dir, std::ostream& out) {
  const Dataset d = load(df);
  const auto stats = summary_stats(d);
  out << render_stats(stats);
  if (d.n() >= 2) out << "variance/mean of " << d.outcome_name << ": " << format_fixed(dispersion_stat(d), 4) << "\n";
  if (!out_dir.empty()) write_outputs(out_dir, {{"summary.csv", stats_csv(stats)}});
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Finite mixtures of Poisson and NB-2 regressions with IC model selection"};
  app.name("countmix");
  app.require_subcommand(1);

  DataFlags sweep_data, ga_data, summary_data;
  FitFlags sweep_fit, ga_fit;
  GaFlags ga_flags;
  SimFlags sim_flags;
  std::string sweep_criterion = "caic";
  std::string summary_out;

  auto* sweep_cmd = app.add_subcommand("sweep", "Fit G = 1..gmax and score every G");
  add_data_flags(sweep_cmd, sweep_data);
  add_fit_flags(sweep_cmd, sweep_fit);
  sweep_cmd->add_option("--criterion", sweep_criterion, "Criterion whose choice is reported in detail");

  auto* ga_cmd = app.add_subcommand("ga", "Genetic-algorithm covariate subset search");
  add_data_flags(ga_cmd, ga_data);
  add_fit_flags(ga_cmd, ga_fit);
  ga_cmd->add_option("--criterion", ga_flags.criterion, "Fitness criterion (aic, sbc, caic, icomp)");
  ga_cmd->add_option("--runs", ga_flags.runs, "Independent GA runs");
  ga_cmd->add_option("--pop", ga_flags.pop, "Population size");
  ga_cmd->add_option("--gens", ga_flags.gens, "Generations per run");
  ga_cmd->add_option("--mut", ga_flags.mut, "Per-bit mutation rate (default 1/p)");
  ga_cmd->add_option("--cx", ga_flags.cx, "Crossover rate");
  ga_cmd->add_option("--elitism", ga_flags.elitism, "Chromosomes carried over unchanged");
  ga_cmd->add_option("--g", ga_flags.g, "Number of components or 'auto'");
  ga_cmd->add_option("--force-mask", ga_flags.force_mask, "Score one subset, e.g. 1,3,4 or none");
  ga_cmd->add_flag("--resweep", ga_flags.resweep, "Re-select G for every subset");

  auto* sim_cmd = app.add_subcommand("simulate", "Write a synthetic data set");
  sim_cmd->add_option("--seed", sim_flags.seed, "Random seed");
  sim_cmd->add_option("--groups", sim_flags.groups, "Number of groups (1..5)");
  sim_cmd->add_option("--n-per-group", sim_flags.n_per_group, "Rows per group");
  sim_cmd->add_flag("--no-reject", sim_flags.no_reject, "Allow group means closer than 5");
  sim_cmd->add_option("--spec", sim_flags.spec, "JSON regression-mixture spec");
  sim_cmd->add_option("--n", sim_flags.n, "Rows for --spec mode");
  sim_cmd->add_option("--out", sim_flags.out, "Output directory");

  auto* summary_cmd = app.add_subcommand("summary", "Summary statistics of a data set");
  add_data_flags(summary_cmd, summary_data);
  summary_cmd->add_option("--out", summary_out, "Directory for summary.csv");

  std::vector<std::string> storage{"countmix"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> cargv;
  for (auto& s : storage) cargv.push_back(s.data());

  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "countmix: " << e.what() << "\n";
    return kInputError;
  }

  try {
    if (*sweep_cmd) return cmd_sweep(sweep_data, sweep_fit, sweep_criterion, args, out);
    if (*ga_cmd) return cmd_ga(ga_data, ga_fit, ga_flags, args, out);
    if (*sim_cmd) return cmd_simulate(sim_flags, args, out);
    if (*summary_cmd) return cmd_summary(summary_data, summary_out, out);
  } catch (const InputError& e) {
    err << "countmix: input error: " << e.what() << "\n";
    return kInputError;
  } catch (const Error& e) {
    err << "countmix: computation failed: " << e.what() << "\n";
    return kComputeError;
  } catch (const std::exception& e) {
    err << "countmix: " << e.what() << "\n";
    return kComputeError;
  }
  return kInputError;
}

}  // namespace countmix::cli
