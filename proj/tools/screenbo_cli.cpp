// Command-line front end: run replicated screening experiments, sweep
// parameter grids, generate synthetic pools and validate dataset/schema
// pairs. Configs are JSON; results are tidy CSVs for external plotting.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include "screenbo/screenbo.hpp"

namespace {

struct RunOverrides {
  std::string method;
  int trials = -1;
  long long seed = -1;
  std::string output;
  std::string trace_dir;
  int workers = -1;
  int threads = -1;
  double budget = -1.0;
  std::string label;

  void apply(screenbo::ExperimentConfig& config) const {
    if (!method.empty()) config.method = screenbo::method_from_name(method);
    if (trials > 0) config.trials = trials;
    if (seed >= 0) config.base_seed = static_cast<std::uint64_t>(seed);
    if (!output.empty()) config.output_path = output;
    if (!trace_dir.empty()) config.trace_dir = trace_dir;
    if (workers > 0) config.workers = workers;
    if (threads > 0) config.threads = threads;
    if (budget > 0.0) config.budget = budget;
    if (!label.empty()) config.label = label;
  }
};

void add_override_flags(CLI::App* cmd, RunOverrides& ov) {
  cmd->add_option("--method", ov.method,
                  "Override the method (sgei|sgt|sgm|str|gt-poor|gt-rich|t-poor|t-rich)");
  cmd->add_option("--trials", ov.trials, "Override the trial count");
  cmd->add_option("--seed", ov.seed, "Override the base seed");
  cmd->add_option("--output", ov.output, "Override the output CSV path");
  cmd->add_option("--trace-dir", ov.trace_dir, "Write per-trial action traces into this directory");
  cmd->add_option("--workers", ov.workers, "Override the simulated worker count");
  cmd->add_option("--threads", ov.threads, "Cap trial-level threads (also SCREENBO_THREADS)");
  cmd->add_option("--budget", ov.budget, "Override the testing budget");
  cmd->add_option("--label", ov.label, "Free-form label echoed into the result file");
}

int run_command(const std::string& config_path, const RunOverrides& ov) {
  const nlohmann::json j = screenbo::load_config_json(config_path);
  screenbo::ExperimentConfig config = screenbo::experiment_from_json(j);
  ov.apply(config);
  const screenbo::ExperimentResult result = screenbo::run_experiment(config);
  std::cout << "method=" << screenbo::method_name(config.method)
            << " trials=" << config.trials;
  for (const std::string name : {"opt_regret", "mine_regret", "total_reward_mine"})
    std::cout << "  " << name << "=" << screenbo::format_double(result.mean(name)) << "(se "
              << screenbo::format_double(result.standard_error(name)) << ")";
  std::cout << "\n";
  if (!config.output_path.empty())
    std::cout << "wrote " << config.output_path << "\n";
  return 0;
}

int sweep_command(const std::string& config_path, std::string summary, const RunOverrides& ov) {
  const nlohmann::json j = screenbo::load_config_json(config_path);
  screenbo::ExperimentConfig base = screenbo::experiment_from_json(j);
  ov.apply(base);
  const auto axes = screenbo::sweep_axes_from_json(j);
  if (summary.empty()) {
    const std::string stem = base.output_path.empty()
                                 ? std::string("sweep")
                                 : std::filesystem::path(base.output_path)
                                       .replace_extension("")
                                       .string();
    summary = stem + "_summary.csv";
  }
  const auto results = screenbo::run_sweep(base, axes, summary);
  std::cout << "ran " << results.size() << " grid points, summary in " << summary << "\n";
  return 0;
}

int gen_synth_command(const screenbo::SynthConfig& sc, const std::string& output,
                      const std::string& schema_out, double cost_cheap, double cost_expensive,
                      double budget, int top_n) {
  const screenbo::Dataset data = screenbo::generate_problem(sc);
  screenbo::write_dataset(data, output);
  std::cout << "wrote " << output << " (" << data.size() << " candidates)\n";
  if (!schema_out.empty()) {
    nlohmann::json j;
    j["features"] = nlohmann::json::array();
    for (Eigen::Index c = 0; c < data.dim(); ++c)
      j["features"].push_back("f" + std::to_string(c));
    j["cheap_column"] = "cheap";
    j["expensive_column"] = "expensive";
    j["id_column"] = "id";
    j["cost_cheap"] = cost_cheap;
    j["cost_expensive"] = cost_expensive;
    j["budget"] = budget;
    j["top_n"] = top_n;
    std::ofstream out(schema_out);
    if (!out) throw screenbo::DataError("cannot open '" + schema_out + "' for writing");
    out << j.dump(2) << "\n";
    std::cout << "wrote " << schema_out << "\n";
  }
  return 0;
}

int validate_command(const std::string& data_path, const std::string& schema_path) {
  const screenbo::SchemaConfig schema = screenbo::load_schema(schema_path);
  const screenbo::Dataset data = screenbo::load_dataset(data_path, schema);
  const auto top = screenbo::true_top_n(data, std::min<int>(schema.top_n, static_cast<int>(data.size())));
  std::cout << "ok: " << data.size() << " candidates, " << data.dim() << " features\n";
  std::cout << "cheap score range  [" << screenbo::format_double(data.cheap_scores.minCoeff())
            << ", " << screenbo::format_double(data.cheap_scores.maxCoeff()) << "]\n";
  std::cout << "expensive range    [" << screenbo::format_double(data.expensive_scores.minCoeff())
            << ", " << screenbo::format_double(data.expensive_scores.maxCoeff()) << "]\n";
  if (!top.empty())
    std::cout << "top-" << top.size() << " threshold "
              << screenbo::format_double(data.expensive_scores[top.back()]) << "\n";
  std::cout << "costs c_C=" << screenbo::format_double(schema.cost_cheap)
            << " c_E=" << screenbo::format_double(schema.cost_expensive)
            << " budget=" << screenbo::format_double(schema.budget)
            << " top_n=" << schema.top_n << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"screenbo: two-test Bayesian-optimization screening toolkit"};
  app.require_subcommand(1);

  std::string config_path, summary_path;
  RunOverrides run_ov, sweep_ov;

  CLI::App* run = app.add_subcommand("run", "Run one replicated experiment from a JSON config");
  run->add_option("-c,--config", config_path, "Experiment config (JSON)")->required();
  add_override_flags(run, run_ov);

  CLI::App* sweep = app.add_subcommand("sweep", "Expand the config's sweep grid");
  sweep->add_option("-c,--config", config_path, "Sweep config (JSON with a 'sweep' object)")
      ->required();
  sweep->add_option("--summary", summary_path, "Merged summary CSV path");
  add_override_flags(sweep, sweep_ov);

  screenbo::SynthConfig sc;
  std::string synth_out = "synth.csv", schema_out;
  double gs_cc = 0.2, gs_ce = 1.0, gs_budget = 50.0;
  int gs_topn = 10;
  long long gs_seed = 0;
  CLI::App* gen = app.add_subcommand("gen-synth", "Generate a synthetic screening pool CSV");
  gen->add_option("--n", sc.n, "Pool size");
  gen->add_option("--theta", sc.theta, "Mixing angle in [0, pi/2]");
  gen->add_option("--seed", gs_seed, "Generator seed");
  gen->add_option("--output", synth_out, "Output CSV path");
  gen->add_option("--schema-out", schema_out, "Also write a matching schema JSON");
  gen->add_option("--cost-cheap", gs_cc, "Cheap test cost recorded in the schema");
  gen->add_option("--cost-expensive", gs_ce, "Expensive test cost recorded in the schema");
  gen->add_option("--budget", gs_budget, "Budget recorded in the schema");
  gen->add_option("--top-n", gs_topn, "Mining target size recorded in the schema");

  std::string val_data, val_schema;
  CLI::App* validate = app.add_subcommand("validate-data", "Check a dataset against a schema");
  validate->add_option("--data", val_data, "Dataset CSV")->required();
  validate->add_option("--schema", val_schema, "Schema JSON")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return run_command(config_path, run_ov);
    if (sweep->parsed()) return sweep_command(config_path, summary_path, sweep_ov);
    if (gen->parsed()) {
      sc.seed = static_cast<std::uint64_t>(gs_seed);
      return gen_synth_command(sc, synth_out, schema_out, gs_cc, gs_ce, gs_budget, gs_topn);
    }
    if (validate->parsed()) return validate_command(val_data, val_schema);
  } catch (const screenbo::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const screenbo::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
