#include "countmix/cli.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using countmix::cli::run;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(COUNTMIX_BINARY_DIR) / "cli_scratch" / name;
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int cli(std::vector<std::string> args, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  if (err_text) *err_text = err.str();
  return code;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (char ch : line) {
      if (ch == '"') quoted = !quoted;
      else if (ch == ',' && !quoted) cells.push_back(std::exchange(cell, {}));
      else cell += ch;
    }
    cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

// Simulated data in <dir>/data.csv with outcome y and covariate x.
fs::path simulated(const std::string& name, const std::string& seed) {
  const fs::path dir = scratch(name);
  REQUIRE(cli({"simulate", "--seed", seed, "--n-per-group", "40", "--out", dir.string()}) == 0);
  return dir / "data.csv";
}

}  // namespace

TEST_CASE("simulate") {
  const fs::path a = scratch("sim_a");
  const fs::path b = scratch("sim_b");
  REQUIRE(cli({"simulate", "--seed", "5", "--out", a.string()}) == 0);
  REQUIRE(cli({"simulate", "--seed", "5", "--out", b.string()}) == 0);
  for (const char* f : {"data.csv", "labels.csv"}) {
    CHECK(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  // Metadata differs only in the recorded output directory.
  auto strip_out = [](nlohmann::json j) {
    j["invocation"].erase("argv");
    j["invocation"]["flags"].erase("out");
    return j;
  };
  CHECK(strip_out(nlohmann::json::parse(slurp(a / "meta.json"))) ==
        strip_out(nlohmann::json::parse(slurp(b / "meta.json"))));
  const auto rows = csv_rows(slurp(a / "data.csv"));
  CHECK(rows.size() == 201);
  CHECK(csv_rows(slurp(a / "labels.csv")).size() == 201);
  const auto meta = nlohmann::json::parse(slurp(a / "meta.json"));
  CHECK(meta["invocation"]["seed"] == 5);
  CHECK(meta["spec"]["groups"].size() == 4);

  std::string err;
  const fs::path bad = scratch("sim_bad");
  CHECK(cli({"simulate", "--groups", "6", "--out", bad.string()}, &err) == 2);
  CHECK_FALSE(err.empty());
  CHECK_FALSE(fs::exists(bad));

  SUBCASE("an absent seed is drawn and recorded") {
    const fs::path c = scratch("sim_c");
    REQUIRE(cli({"simulate", "--n-per-group", "5", "--out", c.string()}) == 0);
    const auto m = nlohmann::json::parse(slurp(c / "meta.json"));
    const auto argv = m["invocation"]["argv"].get<std::vector<std::string>>();
    REQUIRE(argv.size() >= 2);
    CHECK(argv[argv.size() - 2] == "--seed");
    CHECK(argv.back() == std::to_string(m["invocation"]["seed"].get<std::uint64_t>()));
  }
  SUBCASE("spec mode") {
    const fs::path dir = scratch("sim_spec");
    fs::create_directories(dir);
    std::ofstream(dir / "spec.json")
        << R"({"n": 120, "components": [{"pi": 0.5, "beta": [1, 0.2]}, {"pi": 0.5, "beta": [3, -0.1], "alpha": 0.5}],
              "covariates": [{"name": "age", "dist": "uniform", "a": 0, "b": 2}]})";
    REQUIRE(cli({"simulate", "--seed", "3", "--spec", (dir / "spec.json").string(), "--out",
                 (dir / "out").string()}) == 0);
    const auto rows = csv_rows(slurp(dir / "out" / "data.csv"));
    CHECK(rows.size() == 121);
    CHECK(rows[0][1] == "age");
    std::ofstream(dir / "broken.json") << R"({"components": [{"beta": [1]}]})";
    CHECK(cli({"simulate", "--spec", (dir / "broken.json").string(), "--out",
               (dir / "out2").string()}) == 2);
  }
}

TEST_CASE("sweep") {
  const fs::path data = simulated("sweep_data", "7");
  const fs::path out = scratch("sweep_out");
  REQUIRE(cli({"sweep", "--data", data.string(), "--outcome", "y", "--covariates", "x", "--seed",
               "7", "--family", "poisson", "--out", out.string()}) == 0);
  const auto rows = csv_rows(slurp(out / "scores.csv"));
  REQUIRE(rows.size() == 6);
  CHECK(rows[0] == std::vector<std::string>{"G", "logL", "n_k", "AIC", "SBC", "CAIC", "ICOMP"});
  const auto report = nlohmann::json::parse(slurp(out / "report.json"));
  // The chosen G per criterion is the argmin of the CSV column.
  for (auto [name, col] : std::vector<std::pair<std::string, int>>{{"AIC", 3}, {"SBC", 4}, {"CAIC", 5}}) {
    int best = 0;
    double best_v = 1e300;
    for (std::size_t r = 1; r < rows.size(); ++r)
      if (!rows[r][col].empty() && std::stod(rows[r][col]) < best_v) {
        best_v = std::stod(rows[r][col]);
        best = std::stoi(rows[r][0]);
      }
    CHECK(report["chosen"][name] == best);
  }
  CHECK(report["invocation"]["command"] == "sweep");
  CHECK(fs::exists(out / "components.csv"));
  CHECK(fs::exists(out / "summaries.csv"));

  SUBCASE("gmax 1") {
    const fs::path o = scratch("sweep_g1");
    REQUIRE(cli({"sweep", "--data", data.string(), "--outcome", "y", "--covariates", "x",
                 "--seed", "1", "--gmax", "1", "--out", o.string()}) == 0);
    CHECK(csv_rows(slurp(o / "scores.csv")).size() == 2);
  }
  SUBCASE("input errors leave no files") {
    const fs::path o = scratch("sweep_missing");
    CHECK(cli({"sweep", "--data", (out / "nope.csv").string(), "--outcome", "y", "--covariates",
               "x", "--out", o.string()}) == 2);
    CHECK_FALSE(fs::exists(o));
    CHECK(cli({"sweep", "--data", data.string(), "--outcome", "y", "--covariates", "zz", "--out",
               o.string()}) == 2);
    CHECK(cli({"sweep", "--data", data.string(), "--outcome", "y", "--covariates", "x", "--gmax",
               "6", "--out", o.string()}) == 2);
    CHECK(cli({"sweep", "--data", data.string(), "--outcome", "y", "--covariates", "x",
               "--family", "gamma", "--out", o.string()}) == 2);
    CHECK_FALSE(fs::exists(o));
  }
}

TEST_CASE("ga") {
  const fs::path dir = scratch("ga_data");
  fs::create_directories(dir);
  std::ofstream(dir / "spec.json")
      << R"({"components": [{"pi": 1, "beta": [1.5, 0.4, 0, -0.3]}],
            "covariates": [{"name": "a"}, {"name": "b"}, {"name": "c"}]})";
  REQUIRE(cli({"simulate", "--seed", "2", "--spec", (dir / "spec.json").string(), "--n", "200",
               "--out", dir.string()}) == 0);
  const std::string data = (dir / "data.csv").string();
  const std::vector<std::string> base{"--data", data, "--outcome", "y", "--covariates", "a,b,c",
                                      "--seed", "4", "--family", "poisson", "--gmax", "2"};

  SUBCASE("a forced full mask reproduces the sweep") {
    const fs::path s = scratch("ga_sweep");
    auto args = base;
    args.insert(args.begin(), "sweep");
    args.insert(args.end(), {"--out", s.string()});
    REQUIRE(cli(args) == 0);
    const auto report = nlohmann::json::parse(slurp(s / "report.json"));
    const int G = report["chosen"]["CAIC"];
    const auto scores = csv_rows(slurp(s / "scores.csv"));

    const fs::path g = scratch("ga_forced");
    args = base;
    args.insert(args.begin(), "ga");
    args.insert(args.end(), {"--force-mask", "all", "--out", g.string()});
    REQUIRE(cli(args) == 0);
    const auto ga = csv_rows(slurp(g / "ga.csv"));
    REQUIRE(ga.size() == 2);
    CHECK(ga[0] == std::vector<std::string>{"mask", "rel_freq", "AIC", "CAIC", "SBC"});
    CHECK(ga[1][0] == "1,2,3");
    CHECK(ga[1][1] == "1");
    CHECK(ga[1][2] == scores[static_cast<std::size_t>(G)][3]);
    CHECK(ga[1][3] == scores[static_cast<std::size_t>(G)][5]);
    CHECK(ga[1][4] == scores[static_cast<std::size_t>(G)][4]);
  }
  SUBCASE("search finds the informative subset") {
    const fs::path g = scratch("ga_run");
    auto args = base;
    args.insert(args.begin(), "ga");
    args.insert(args.end(), {"--g", "1", "--runs", "10", "--pop", "8", "--gens", "8", "--out", g.string()});
    REQUIRE(cli(args) == 0);
    const auto ga = csv_rows(slurp(g / "ga.csv"));
    CHECK(ga[1][0] == "1,3");
  }
  SUBCASE("bad masks and settings") {
    for (const std::string mask : {"1,9", "x", "0", "1,,2"}) {
      const fs::path g = scratch("ga_bad");
      auto args = base;
      args.insert(args.begin(), "ga");
      args.insert(args.end(), {"--force-mask", mask, "--out", g.string()});
      CHECK(cli(args) == 2);
      CHECK_FALSE(fs::exists(g));
    }
    auto args = base;
    args.insert(args.begin(), "ga");
    args.insert(args.end(), {"--pop", "2", "--out", scratch("ga_bad2").string()});
    CHECK(cli(args) == 2);
  }
}

TEST_CASE("summary") {
  const fs::path data = simulated("summary_data", "9");
  const fs::path out = scratch("summary_out");
  std::ostringstream o, e;
  REQUIRE(run({"summary", "--data", data.string(), "--outcome", "y", "--covariates", "x", "--out",
               out.string()},
              o, e) == 0);
  const auto rows = csv_rows(slurp(out / "summary.csv"));
  CHECK(rows.size() == 3);
  CHECK(o.str().find("variance/mean") != std::string::npos);
}

TEST_CASE("usage errors") {
  CHECK(cli({}) == 2);
  CHECK(cli({"fit"}) == 2);
  CHECK(cli({"sweep", "--outcome", "y"}) == 2);
}
