#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "screenbo/bench.hpp"

using namespace screenbo;

namespace {

std::string source_path(const std::string& rel) {
  return std::string(SCREENBO_SOURCE_DIR) + "/" + rel;
}

ExperimentConfig small_synth_config(const std::string& out) {
  ExperimentConfig c;
  SynthConfig sc;
  sc.n = 30;
  sc.theta = 0.6;
  c.synth = sc;
  c.method = Method::sgt;
  c.budget = 4.0;
  c.cost_cheap = 0.2;
  c.cost_expensive = 1.0;
  c.top_n = 3;
  c.trials = 10;
  c.base_seed = 40;
  c.mc.acquisition_draws = 32;
  c.mc.threshold_draws = 64;
  c.mc.controller_outer_draws = 8;
  c.output_path = out;
  c.threads = 2;
  return c;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("screenbo_bench_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("aggregates equal an independent recomputation from the trial rows") {
  TempDir dir;
  const ExperimentConfig config = small_synth_config(dir.file("r.csv"));
  const ExperimentResult result = run_experiment(config);
  REQUIRE(result.trials.size() == 10);

  const CsvTable table = read_csv(dir.file("r.csv"));
  const int regret_col = table.column("opt_regret");
  REQUIRE(regret_col >= 0);
  std::vector<double> values;
  std::vector<std::string> mean_row, se_row;
  for (const auto& row : table.rows) {
    if (row[0] == "mean")
      mean_row = row;
    else if (row[0] == "se")
      se_row = row;
    else
      values.push_back(parse_double(row[static_cast<std::size_t>(regret_col)], "opt_regret"));
  }
  REQUIRE(values.size() == 10);
  REQUIRE(!mean_row.empty());
  const double mean = parse_double(mean_row[static_cast<std::size_t>(regret_col)], "mean");
  const double se = parse_double(se_row[static_cast<std::size_t>(regret_col)], "se");
  CHECK(mean == doctest::Approx(mean_of(values)).epsilon(1e-12));
  CHECK(se == doctest::Approx(standard_error_of(values)).epsilon(1e-12));
}

TEST_CASE("result files are byte-identical across repeated runs") {
  TempDir dir;
  ExperimentConfig config = small_synth_config(dir.file("a.csv"));
  run_experiment(config);
  config.output_path = dir.file("b.csv");
  run_experiment(config);
  CHECK(slurp(dir.file("a.csv")) == slurp(dir.file("b.csv")));
}

TEST_CASE("distinct seeds are required") {
  ExperimentConfig config = small_synth_config("");
  config.seeds = {1, 2, 2, 4, 5, 6, 7, 8, 9, 10};
  CHECK_THROWS_AS(config.validate(), ConfigError);
}

TEST_CASE("unknown method names are rejected") {
  CHECK_THROWS_AS(method_from_name("sgtt"), ConfigError);
}

TEST_CASE("a three-point sweep writes three result files and one summary") {
  TempDir dir;
  ExperimentConfig base = small_synth_config(dir.file("sw.csv"));
  base.trials = 3;
  std::vector<SweepAxis> axes = {
      {"theta", {nlohmann::json(0.0), nlohmann::json(0.7853981633974483),
                 nlohmann::json(1.5707963267948966)}}};
  const auto results = run_sweep(base, axes, dir.file("summary.csv"));
  CHECK(results.size() == 3);
  int files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir.path))
    if (entry.path().filename().string().rfind("sw__", 0) == 0) ++files;
  CHECK(files == 3);
  const CsvTable summary = read_csv(dir.file("summary.csv"));
  CHECK(summary.rows.size() == 3);  // one row per grid point
  CHECK(summary.column("theta") >= 0);
  CHECK(summary.column("mean_mine_regret") >= 0);
}

TEST_CASE("a sweep with no axes degrades to the single base run") {
  TempDir dir;
  ExperimentConfig base = small_synth_config(dir.file("solo.csv"));
  base.trials = 2;
  const auto results = run_sweep(base, {}, dir.file("solo_summary.csv"));
  REQUIRE(results.size() == 1);
  base.output_path = dir.file("direct.csv");
  const ExperimentResult direct = run_experiment(base);
  CHECK(results[0].mean("opt_regret") == direct.mean("opt_regret"));
  CHECK(results[0].mean("mine_regret") == direct.mean("mine_regret"));
}

TEST_CASE("sweep axes colliding with fixed fields are rejected") {
  nlohmann::json j;
  j["problem"] = {{"type", "synth"}, {"n", 20}, {"theta", 0.5}};
  j["sweep"] = {{"theta", {0.1, 0.2}}};
  CHECK_THROWS_AS(sweep_axes_from_json(j), ConfigError);
  nlohmann::json j2;
  j2["problem"] = {{"type", "synth"}, {"n", 20}};
  j2["budget"] = 10.0;
  j2["sweep"] = {{"budget", {5.0, 10.0}}};
  CHECK_THROWS_AS(sweep_axes_from_json(j2), ConfigError);
}

TEST_CASE("experiment-1 preset encodes the stated parameters") {
  const nlohmann::json j = load_config_json(source_path("presets/exp1_desk.json"));
  const ExperimentConfig c = experiment_from_json(j);
  REQUIRE(c.synth.has_value());
  CHECK(c.cost_cheap == 0.2);
  CHECK(c.cost_expensive == 1.0);
  CHECK(c.budget == 50.0);
  CHECK(c.workers == 1);
  const auto axes = sweep_axes_from_json(j);
  bool found_theta = false;
  for (const auto& axis : axes) {
    if (axis.key != "theta") continue;
    found_theta = true;
    CHECK(axis.values.front().get<double>() == 0.0);
    CHECK(axis.values.back().get<double>() == doctest::Approx(M_PI / 2.0).epsilon(1e-15));
  }
  CHECK(found_theta);
}

TEST_CASE("experiment-3 preset encodes theta=pi/4, unit cheap cost and 1..16 workers") {
  const nlohmann::json j = load_config_json(source_path("presets/exp3_full.json"));
  const ExperimentConfig c = experiment_from_json(j);
  REQUIRE(c.synth.has_value());
  CHECK(c.synth->theta == doctest::Approx(M_PI / 4.0).epsilon(1e-15));
  CHECK(c.cost_cheap == 1.0);
  CHECK(c.cost_expensive == 1.0);
  const auto axes = sweep_axes_from_json(j);
  bool found_workers = false;
  for (const auto& axis : axes) {
    if (axis.key != "workers") continue;
    found_workers = true;
    CHECK(axis.values.size() == 16);
    CHECK(axis.values.front().get<int>() == 1);
    CHECK(axis.values.back().get<int>() == 16);
  }
  CHECK(found_workers);
}

TEST_CASE("rich-mode result rows carry the up-front cheap cost") {
  TempDir dir;
  ExperimentConfig c = small_synth_config(dir.file("rich.csv"));
  c.method = Method::t_rich;
  c.trials = 2;
  c.budget = 3.0;
  c.refit = false;
  c.model_init.lengthscale = 0.4;
  const ExperimentResult r = run_experiment(c);
  for (const auto& t : r.trials) {
    CHECK(t.cheap_tests == 30);
    CHECK(t.expensive_tests == 3);
    CHECK(t.total_cost == doctest::Approx(30 * 0.2 + 3 * 1.0));
  }
}

TEST_CASE("every method runs end to end and respects the budget") {
  for (Method m : {Method::sgei, Method::sgt, Method::sgm, Method::str, Method::gt_poor,
                   Method::gt_rich, Method::t_poor, Method::t_rich}) {
    ExperimentConfig c = small_synth_config("");
    c.method = m;
    c.trials = 1;
    c.budget = 3.0;
    c.synth->n = 20;
    c.mc.controller_mining_draws = 32;
    if (is_single_test(m)) c.refit = false;
    const ExperimentResult r = run_experiment(c);
    REQUIRE(r.trials.size() == 1);
    const auto& t = r.trials[0];
    CHECK(t.expensive_tests > 0);
    const double spend = t.total_cost - (is_rich(m) ? 20 * c.cost_cheap : 0.0);
    CHECK(spend <= c.budget + 1e-9);
    CHECK(t.mine_regret >= 0);
    CHECK(t.mine_regret <= c.top_n);
  }
}

TEST_CASE("per-trial traces are exported when a trace directory is set") {
  TempDir dir;
  ExperimentConfig c = small_synth_config(dir.file("t.csv"));
  c.trials = 3;
  c.workers = 2;  // timestamped traces
  c.trace_dir = dir.file("traces");
  run_experiment(c);
  for (int t = 0; t < 3; ++t) {
    const CsvTable trace = read_csv(dir.file("traces/trial_" + std::to_string(t) + ".csv"));
    CHECK(trace.column("candidate_id") == 2);
    CHECK(trace.column("dispatch_time") == 8);
    CHECK(trace.column("finish_time") == 9);
    CHECK(!trace.rows.empty());
  }
}

TEST_CASE("two-test total cost stays within one test of the budget") {
  TempDir dir;
  ExperimentConfig c = small_synth_config("");
  c.trials = 4;
  const ExperimentResult r = run_experiment(c);
  for (const auto& t : r.trials) {
    CHECK(t.total_cost <= c.budget + 1e-9);
    CHECK(c.budget - t.total_cost < std::max(c.cost_cheap, c.cost_expensive) + 1e-9);
  }
}
