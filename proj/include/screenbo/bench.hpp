#pragma once

// Experiment runner: replicated screening trials with per-trial seeds,
// aggregation into mean / standard-error rows, tidy CSV export and cartesian
// parameter sweeps. Trials are independent and run on a small thread pool;
// output is byte-stable for a fixed seed list.

#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "screenbo/csv.hpp"
#include "screenbo/data_io.hpp"
#include "screenbo/engine.hpp"
#include "screenbo/parallel.hpp"
#include "screenbo/synth.hpp"
#include "screenbo/trace.hpp"

namespace screenbo {

enum class Method {
  sgei,     // sequential greedy, expected improvement
  sgt,      // sequential greedy, threshold
  sgm,      // sequential greedy, mining
  str,      // sequential thompson, random controller
  gt_poor,  // single-test greedy threshold, cheap test ignored
  gt_rich,  // single-test greedy threshold, cheap scores pre-purchased as a feature
  t_poor,   // single-test thompson, poor features
  t_rich,   // single-test thompson, rich features
};

inline Method method_from_name(const std::string& name) {
  if (name == "sgei") return Method::sgei;
  if (name == "sgt") return Method::sgt;
  if (name == "sgm") return Method::sgm;
  if (name == "str") return Method::str;
  if (name == "gt-poor") return Method::gt_poor;
  if (name == "gt-rich") return Method::gt_rich;
  if (name == "t-poor") return Method::t_poor;
  if (name == "t-rich") return Method::t_rich;
  throw ConfigError("unknown method '" + name +
                    "' (expected sgei|sgt|sgm|str|gt-poor|gt-rich|t-poor|t-rich)");
}

inline const char* method_name(Method m) {
  switch (m) {
    case Method::sgei: return "sgei";
    case Method::sgt: return "sgt";
    case Method::sgm: return "sgm";
    case Method::str: return "str";
    case Method::gt_poor: return "gt-poor";
    case Method::gt_rich: return "gt-rich";
    case Method::t_poor: return "t-poor";
    case Method::t_rich: return "t-rich";
  }
  return "?";
}

inline bool is_single_test(Method m) {
  return m == Method::gt_poor || m == Method::gt_rich || m == Method::t_poor ||
         m == Method::t_rich;
}

inline bool is_rich(Method m) { return m == Method::gt_rich || m == Method::t_rich; }

enum class ModelKind { covariate, multi_fidelity };

// Starting hyperparameters for screens on real data (standardized features);
// synthetic screens default to the exact generative model instead.
struct ModelInit {
  double signal_variance = 1.0;
  double lengthscale = 1.0;
  double sigma_cheap = 0.3;
  double sigma_expensive = 0.3;
};

struct ExperimentConfig {
  // Problem source: a synthetic family or an ingested dataset.
  std::optional<SynthConfig> synth;
  std::string data_path;
  std::string schema_path;

  Method method = Method::sgt;
  ModelKind model_kind = ModelKind::covariate;
  bool use_true_model = true;  // synthetic problems only
  ModelInit model_init;
  std::optional<bool> refit;  // default: off with the true model, on otherwise

  int workers = 1;
  double budget = 50.0;
  double cost_cheap = 0.2;
  double cost_expensive = 1.0;
  int top_n = 10;
  std::optional<double> cheap_action_probability;  // random controller tuning

  int trials = 1;
  std::uint64_t base_seed = 1;
  std::vector<std::uint64_t> seeds;  // explicit list; otherwise base_seed + i

  McSettings mc;
  InitSettings init;
  std::string output_path;
  std::string trace_dir;  // when set, per-trial action traces land here
  int threads = 0;        // 0: SCREENBO_THREADS env var, then hardware
  std::string label;

  std::vector<std::uint64_t> trial_seeds() const {
    std::vector<std::uint64_t> out = seeds;
    if (out.empty())
      for (int i = 0; i < trials; ++i) out.push_back(base_seed + static_cast<std::uint64_t>(i));
    return out;
  }

  void validate() const {
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (!synth && data_path.empty())
      throw ConfigError("no problem source: set a synth block or a data path");
    const auto s = trial_seeds();
    if (static_cast<int>(s.size()) != trials)
      throw ConfigError("seed list length does not match trials");
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = i + 1; j < s.size(); ++j)
        if (s[i] == s[j]) throw ConfigError("seeds must be distinct");
  }
};

struct TrialMetrics {
  int trial = 0;
  std::uint64_t seed = 0;
  double opt_regret = 0.0;
  double mine_regret = 0.0;
  double cheap_tests = 0.0;
  double expensive_tests = 0.0;
  double total_cost = 0.0;
  double total_reward_opt = 0.0;
  double total_reward_mine = 0.0;
};

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {
      "opt_regret",     "mine_regret", "cheap_tests",      "expensive_tests",
      "total_cost",     "total_reward_opt", "total_reward_mine"};
  return names;
}

inline double metric_value(const TrialMetrics& t, const std::string& name) {
  if (name == "opt_regret") return t.opt_regret;
  if (name == "mine_regret") return t.mine_regret;
  if (name == "cheap_tests") return t.cheap_tests;
  if (name == "expensive_tests") return t.expensive_tests;
  if (name == "total_cost") return t.total_cost;
  if (name == "total_reward_opt") return t.total_reward_opt;
  if (name == "total_reward_mine") return t.total_reward_mine;
  throw InputError("unknown metric " + name);
}

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<TrialMetrics> trials;

  std::vector<double> column(const std::string& name) const {
    std::vector<double> out;
    out.reserve(trials.size());
    for (const auto& t : trials) out.push_back(metric_value(t, name));
    return out;
  }
  double mean(const std::string& name) const { return mean_of(column(name)); }
  double standard_error(const std::string& name) const {
    return standard_error_of(column(name));
  }
};

namespace detail {

inline int resolve_threads(int configured, int trials) {
  int n = configured;
  if (n <= 0) {
    if (const char* env = std::getenv("SCREENBO_THREADS")) n = std::atoi(env);
  }
  if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
  if (n <= 0) n = 1;
  return std::min(n, trials);
}

template <class Model>
Trace run_two_test(const Dataset& oracle, const Model& model, const ScreenProblem& prob,
                   const PolicyConfig& pc, int workers) {
  if (workers == 1) return run_sequential(oracle, model, prob, pc);
  return simulate_parallel(oracle, model, prob, pc, workers);
}

}  // namespace detail

// Run one trial of the configured method on one problem instance.
inline TrialMetrics run_trial(const ExperimentConfig& config, const Dataset& data, int trial,
                              std::uint64_t seed) {
  ScreenProblem prob;
  prob.budget = config.budget;
  prob.cost_cheap = config.cost_cheap;
  prob.cost_expensive = config.cost_expensive;
  prob.top_n = config.top_n;

  PolicyConfig pc;
  pc.seed = seed;
  pc.mc = config.mc;
  pc.init = config.init;
  pc.cheap_action_probability = config.cheap_action_probability;

  const Eigen::Index d = data.dim();
  Trace trace;
  if (is_single_test(config.method)) {
    pc.acquisition = (config.method == Method::gt_poor || config.method == Method::gt_rich)
                         ? AcquisitionKind::threshold
                         : AcquisitionKind::thompson;
    pc.controller = ControllerKind::random;
    pc.refit = config.refit.value_or(true);
    const FeatureMode mode = is_rich(config.method) ? FeatureMode::rich : FeatureMode::poor;
    const Eigen::Index gp_dim = mode == FeatureMode::rich ? d + 1 : d;
    SingleTestModel model{
        KernelSpec::isotropic(config.model_init.signal_variance, config.model_init.lengthscale,
                              gp_dim),
        config.model_init.sigma_expensive};
    trace = config.workers == 1
                ? run_single_test(data, model, prob, pc, mode)
                : simulate_parallel_single(data, model, prob, pc, mode, config.workers);
  } else {
    switch (config.method) {
      case Method::sgei:
        pc.acquisition = AcquisitionKind::expected_improvement;
        pc.controller = ControllerKind::greedy;
        break;
      case Method::sgt:
        pc.acquisition = AcquisitionKind::threshold;
        pc.controller = ControllerKind::greedy;
        break;
      case Method::sgm:
        pc.acquisition = AcquisitionKind::mining;
        pc.controller = ControllerKind::greedy;
        break;
      case Method::str:
        pc.acquisition = AcquisitionKind::thompson;
        pc.controller = ControllerKind::random;
        break;
      default: throw ConfigError("not a two-test method");
    }
    const bool true_model = config.synth && config.use_true_model &&
                            config.model_kind == ModelKind::covariate;
    pc.refit = config.refit.value_or(!true_model);
    if (config.model_kind == ModelKind::covariate) {
      CovariateModel model =
          true_model ? synth_true_model(*config.synth)
                     : CovariateModel(
                           KernelSpec::isotropic(config.model_init.signal_variance,
                                                 config.model_init.lengthscale, d),
                           KernelSpec::isotropic(config.model_init.signal_variance,
                                                 config.model_init.lengthscale, d + 1),
                           config.model_init.sigma_cheap, config.model_init.sigma_expensive);
      trace = detail::run_two_test(data, model, prob, pc, config.workers);
    } else {
      MultiFidelityModel model(
          KernelSpec::isotropic(config.model_init.signal_variance,
                                config.model_init.lengthscale, d),
          config.model_init.sigma_cheap, config.model_init.sigma_expensive);
      trace = detail::run_two_test(data, model, prob, pc, config.workers);
    }
  }

  if (!config.trace_dir.empty())
    write_trace_csv(trace, (std::filesystem::path(config.trace_dir) /
                            ("trial_" + std::to_string(trial) + ".csv"))
                               .string());

  TrialMetrics m;
  m.trial = trial;
  m.seed = seed;
  m.opt_regret = optimization_regret(trace, data);
  m.mine_regret = mining_regret(trace, data, config.top_n);
  m.cheap_tests = trace.cheap_tests();
  m.expensive_tests = trace.expensive_tests();
  m.total_cost = trace.total_cost(config.cost_cheap, config.cost_expensive);
  m.total_reward_opt = trace.total_reward_opt();
  m.total_reward_mine = trace.total_reward_mine();
  return m;
}

inline void write_result_csv(const ExperimentResult& result, std::ostream& out);

// R independent trials. Synthetic problems are regenerated per trial from the
// trial seed (so different methods with the same seed list face the same
// problems); dataset problems reuse the loaded data and only the policy seed
// varies.
inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const std::vector<std::uint64_t> seeds = config.trial_seeds();

  std::optional<Dataset> shared;
  if (!config.synth) {
    SchemaConfig schema = load_schema(config.schema_path);
    shared = load_dataset(config.data_path, schema);
  }

  if (!config.trace_dir.empty()) std::filesystem::create_directories(config.trace_dir);

  ExperimentResult result;
  result.config = config;
  result.trials.resize(seeds.size());

  const int threads = detail::resolve_threads(config.threads, config.trials);
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto work = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= static_cast<int>(seeds.size())) return;
      try {
        Dataset local;
        const Dataset* data = nullptr;
        if (config.synth) {
          SynthConfig sc = *config.synth;
          sc.seed = derive_seed(seeds[static_cast<std::size_t>(i)], 7);
          local = generate_problem(sc);
          data = &local;
        } else {
          data = &*shared;
        }
        result.trials[static_cast<std::size_t>(i)] =
            run_trial(config, *data, i, seeds[static_cast<std::size_t>(i)]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  if (!config.output_path.empty()) {
    const auto parent = std::filesystem::path(config.output_path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(config.output_path);
    if (!out) throw DataError("cannot open '" + config.output_path + "' for writing");
    write_result_csv(result, out);
  }
  return result;
}

inline void write_result_csv(const ExperimentResult& result, std::ostream& out) {
  const ExperimentConfig& c = result.config;
  out << "# method=" << method_name(c.method) << "\n";
  if (c.synth)
    out << "# problem=synth n=" << c.synth->n << " theta=" << format_double(c.synth->theta)
        << "\n";
  else
    out << "# problem=data path=" << c.data_path << "\n";
  out << "# workers=" << c.workers << " budget=" << format_double(c.budget)
      << " cost_cheap=" << format_double(c.cost_cheap)
      << " cost_expensive=" << format_double(c.cost_expensive) << " top_n=" << c.top_n
      << " trials=" << c.trials << "\n";
  if (!c.label.empty()) out << "# label=" << c.label << "\n";
  out << "trial,seed";
  for (const auto& name : metric_names()) out << ',' << name;
  out << '\n';
  for (const auto& t : result.trials) {
    out << t.trial << ',' << t.seed;
    for (const auto& name : metric_names()) out << ',' << format_double(metric_value(t, name));
    out << '\n';
  }
  out << "mean,";
  for (const auto& name : metric_names()) out << ',' << format_double(result.mean(name));
  out << '\n';
  out << "se,";
  for (const auto& name : metric_names())
    out << ',' << format_double(result.standard_error(name));
  out << '\n';
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct SweepAxis {
  std::string key;
  std::vector<nlohmann::json> values;
};

inline void apply_override(ExperimentConfig& config, const std::string& key,
                           const nlohmann::json& value) {
  auto need_synth = [&]() -> SynthConfig& {
    if (!config.synth) throw ConfigError("'" + key + "' only applies to synthetic problems");
    return *config.synth;
  };
  if (key == "theta")
    need_synth().theta = value.get<double>();
  else if (key == "n")
    need_synth().n = value.get<int>();
  else if (key == "workers")
    config.workers = value.get<int>();
  else if (key == "budget")
    config.budget = value.get<double>();
  else if (key == "cost_cheap")
    config.cost_cheap = value.get<double>();
  else if (key == "cost_expensive")
    config.cost_expensive = value.get<double>();
  else if (key == "top_n")
    config.top_n = value.get<int>();
  else if (key == "trials")
    config.trials = value.get<int>();
  else if (key == "cheap_action_probability")
    config.cheap_action_probability = value.get<double>();
  else if (key == "method")
    config.method = method_from_name(value.get<std::string>());
  else
    throw ConfigError("unknown sweep key '" + key + "'");
}

inline std::string slug_of(const nlohmann::json& value) {
  std::string s = value.is_string() ? value.get<std::string>() : value.dump();
  for (char& ch : s)
    if (ch == '.' ) ch = 'p';
  return s;
}

// ---------------------------------------------------------------------------
// Config files
// ---------------------------------------------------------------------------

inline ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    const auto& p = j.at("problem");
    const std::string type = p.at("type").get<std::string>();
    if (type == "synth") {
      SynthConfig s;
      s.n = p.value("n", s.n);
      s.theta = p.value("theta", s.theta);
      s.cheap_signal_variance = p.value("cheap_signal_variance", s.cheap_signal_variance);
      s.expensive_signal_variance =
          p.value("expensive_signal_variance", s.expensive_signal_variance);
      s.lengthscale = p.value("lengthscale", s.lengthscale);
      s.sigma_cheap = p.value("sigma_cheap", s.sigma_cheap);
      s.sigma_expensive = p.value("sigma_expensive", s.sigma_expensive);
      c.synth = s;
    } else if (type == "data") {
      c.data_path = p.at("path").get<std::string>();
      c.schema_path = p.at("schema").get<std::string>();
    } else {
      throw ConfigError("problem type must be 'synth' or 'data'");
    }

    if (j.contains("method")) c.method = method_from_name(j.at("method").get<std::string>());

    if (!c.data_path.empty()) {
      // Schema supplies the screen parameters; explicit keys override below.
      const SchemaConfig schema = load_schema(c.schema_path);
      c.budget = schema.budget;
      c.cost_cheap = schema.cost_cheap;
      c.cost_expensive = schema.cost_expensive;
      c.top_n = schema.top_n;
      if (is_single_test(c.method) && schema.single_test_cost_expensive)
        c.cost_expensive = *schema.single_test_cost_expensive;
    }

    if (j.contains("model")) {
      const std::string m = j.at("model").get<std::string>();
      if (m == "covariate")
        c.model_kind = ModelKind::covariate;
      else if (m == "multi-fidelity")
        c.model_kind = ModelKind::multi_fidelity;
      else
        throw ConfigError("model must be 'covariate' or 'multi-fidelity'");
    }
    c.use_true_model = j.value("use_true_model", c.use_true_model);
    if (j.contains("model_init")) {
      const auto& mi = j.at("model_init");
      c.model_init.signal_variance = mi.value("signal_variance", c.model_init.signal_variance);
      c.model_init.lengthscale = mi.value("lengthscale", c.model_init.lengthscale);
      c.model_init.sigma_cheap = mi.value("sigma_cheap", c.model_init.sigma_cheap);
      c.model_init.sigma_expensive =
          mi.value("sigma_expensive", c.model_init.sigma_expensive);
    }
    if (j.contains("refit")) c.refit = j.at("refit").get<bool>();

    c.workers = j.value("workers", c.workers);
    c.budget = j.value("budget", c.budget);
    c.cost_cheap = j.value("cost_cheap", c.cost_cheap);
    c.cost_expensive = j.value("cost_expensive", c.cost_expensive);
    c.top_n = j.value("top_n", c.top_n);
    if (j.contains("cheap_action_probability"))
      c.cheap_action_probability = j.at("cheap_action_probability").get<double>();
    c.trials = j.value("trials", c.trials);
    c.base_seed = j.value("seed", c.base_seed);
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();

    if (j.contains("mc")) {
      const auto& mc = j.at("mc");
      c.mc.acquisition_draws = mc.value("acquisition_draws", c.mc.acquisition_draws);
      c.mc.threshold_draws = mc.value("threshold_draws", c.mc.threshold_draws);
      c.mc.threshold_refresh = mc.value("threshold_refresh", c.mc.threshold_refresh);
      c.mc.controller_outer_draws =
          mc.value("controller_outer_draws", c.mc.controller_outer_draws);
      c.mc.controller_mining_draws =
          mc.value("controller_mining_draws", c.mc.controller_mining_draws);
      c.mc.refit_interval = mc.value("refit_interval", c.mc.refit_interval);
      c.mc.pool_cap = mc.value("pool_cap", c.mc.pool_cap);
    }
    if (j.contains("init")) {
      const auto& init = j.at("init");
      c.init.random_cheap_tests = init.value("random_cheap_tests", c.init.random_cheap_tests);
      c.init.force_first_expensive =
          init.value("force_first_expensive", c.init.force_first_expensive);
    }
    c.output_path = j.value("output", c.output_path);
    c.trace_dir = j.value("trace_dir", c.trace_dir);
    c.threads = j.value("threads", c.threads);
    c.label = j.value("label", c.label);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad experiment config: ") + e.what());
  }
  return c;
}

inline nlohmann::json load_config_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse config '" + path + "': " + e.what());
  }
  return j;
}

// Sweep axes from the config's "sweep" object, rejecting axes that collide
// with an explicitly fixed field of the same config.
inline std::vector<SweepAxis> sweep_axes_from_json(const nlohmann::json& j) {
  if (!j.contains("sweep")) throw ConfigError("sweep config needs a 'sweep' object");
  std::vector<SweepAxis> axes;
  for (const auto& [key, values] : j.at("sweep").items()) {
    const bool fixed_in_problem =
        (key == "theta" || key == "n") && j.contains("problem") && j.at("problem").contains(key);
    if (fixed_in_problem || j.contains(key))
      throw ConfigError("sweep key '" + key + "' collides with a fixed field");
    if (!values.is_array()) throw ConfigError("sweep axis '" + key + "' must be an array");
    axes.push_back({key, std::vector<nlohmann::json>(values.begin(), values.end())});
  }
  return axes;
}

// Cartesian expansion of the axes over run_experiment; one result file per
// grid point plus one merged summary CSV. No axes degrades to a single run of
// the base configuration.
inline std::vector<ExperimentResult> run_sweep(const ExperimentConfig& base,
                                               const std::vector<SweepAxis>& axes,
                                               const std::string& summary_path) {
  for (const auto& axis : axes)
    if (axis.values.empty()) throw ConfigError("sweep axis '" + axis.key + "' has no values");

  std::size_t total = 1;
  for (const auto& axis : axes) total *= axis.values.size();
  const std::string stem = base.output_path.empty()
                               ? std::string("sweep")
                               : std::filesystem::path(base.output_path)
                                     .replace_extension("")
                                     .string();
  auto point_indices = [&](std::size_t p) {
    std::vector<std::size_t> idx(axes.size(), 0);
    for (std::size_t a = axes.size(); a-- > 0;) {
      idx[a] = p % axes[a].values.size();
      p /= axes[a].values.size();
    }
    return idx;
  };

  std::vector<ExperimentResult> results;
  for (std::size_t p = 0; p < total; ++p) {
    const auto idx = point_indices(p);
    ExperimentConfig point = base;
    std::string slug;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      apply_override(point, axes[a].key, axes[a].values[idx[a]]);
      slug += "__" + axes[a].key + "=" + slug_of(axes[a].values[idx[a]]);
    }
    if (!axes.empty()) point.output_path = stem + slug + ".csv";
    results.push_back(run_experiment(point));
  }

  if (!summary_path.empty()) {
    const auto parent = std::filesystem::path(summary_path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(summary_path);
    if (!out) throw DataError("cannot open '" + summary_path + "' for writing");
    out << "point";
    for (const auto& axis : axes) out << ',' << axis.key;
    for (const auto& name : metric_names()) out << ",mean_" << name << ",se_" << name;
    out << '\n';
    for (std::size_t p = 0; p < results.size(); ++p) {
      const auto idx = point_indices(p);
      out << p;
      for (std::size_t a = 0; a < axes.size(); ++a) out << ',' << slug_of(axes[a].values[idx[a]]);
      for (const auto& name : metric_names())
        out << ',' << format_double(results[p].mean(name)) << ','
            << format_double(results[p].standard_error(name));
      out << '\n';
    }
  }
  return results;
}

}  // namespace screenbo
