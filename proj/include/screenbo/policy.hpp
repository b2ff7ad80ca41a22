#pragma once

// Policy knobs: which acquisition drives candidate choice, which controller
// picks between the cheap and the expensive test, Monte-Carlo budgets and
// schedules, and the initialization phase.

#include <cstdint>
#include <optional>

#include "screenbo/errors.hpp"
#include "screenbo/models.hpp"
#include "screenbo/rng.hpp"
#include "screenbo/state.hpp"

namespace screenbo {

enum class AcquisitionKind { expected_improvement, mining, threshold, thompson };
enum class ControllerKind { greedy, random };

inline const char* acquisition_name(AcquisitionKind a) {
  switch (a) {
    case AcquisitionKind::expected_improvement: return "expected_improvement";
    case AcquisitionKind::mining: return "mining";
    case AcquisitionKind::threshold: return "threshold";
    case AcquisitionKind::thompson: return "thompson";
  }
  return "?";
}

struct InitSettings {
  // Uniformly random cheap tests before acquisition-driven selection;
  // -1 resolves to max(5, 2*workers) at run time.
  int random_cheap_tests = -1;
  // Spend the first expensive test on the best cheap-tested candidate so the
  // running maximum exists before expected improvement needs it.
  bool force_first_expensive = true;

  int resolve_random_cheap(int workers) const {
    return random_cheap_tests >= 0 ? random_cheap_tests : std::max(5, 2 * workers);
  }
};

struct McSettings {
  int acquisition_draws = 512;      // Monte-Carlo acquisition evaluation
  int threshold_draws = 4096;       // threshold estimation
  int threshold_refresh = 10;       // expensive tests between re-estimates
  int controller_outer_draws = 64;  // cheap-score draws in the greedy decision
  int controller_mining_draws = 128;  // inner joint draws per mining lookahead
  int refit_interval = 10;          // revealed scores between refits
  int pool_cap = 5000;              // acquisition pool size for huge screens
};

struct PolicyConfig {
  AcquisitionKind acquisition = AcquisitionKind::threshold;
  ControllerKind controller = ControllerKind::greedy;
  std::optional<double> cheap_action_probability;  // random controller; cost formula default
  bool refit = false;
  RefitSettings refit_settings;
  InitSettings init;
  McSettings mc;
  std::uint64_t seed = 0;

  void validate() const {
    if (controller == ControllerKind::greedy && acquisition == AcquisitionKind::thompson)
      throw ConfigError("the greedy controller needs a greedy acquisition, not thompson");
    if (cheap_action_probability &&
        (*cheap_action_probability < 0.0 || *cheap_action_probability > 1.0))
      throw ConfigError("cheap_action_probability must lie in [0, 1]");
  }
};

// Screen-level parameters shared by every policy on a problem.
struct ScreenProblem {
  double budget = 0.0;
  double cost_cheap = 1.0;
  double cost_expensive = 1.0;
  int top_n = 1;  // N of the mining objective
};

enum class ControllerChoice { run_cheap, run_expensive };

// Tuned probability of choosing the cheap test, set so that roughly half the
// budget goes on cheap tests of candidates that never reach the expensive
// one: (c_E + 2 c_C) / (c_E + 3 c_C), written as 1 - c_C / (c_E + 3 c_C) so
// that round dyadic ratios stay exact.
inline double default_cheap_action_probability(double cost_cheap, double cost_expensive) {
  return 1.0 - cost_cheap / (cost_expensive + 3.0 * cost_cheap);
}

// Random controller. Forced only when one of the two tests is impossible
// (no candidates in the right state, or unaffordable); otherwise Bernoulli.
inline ControllerChoice random_controller_decide(double p_cheap, const ScreenState& state,
                                                 Rng& rng) {
  const bool cheap_ok =
      state.untested_count() > 0 && state.budget_remaining() >= state.cost_cheap();
  const bool expensive_ok =
      state.cheap_tested_count() > 0 && state.budget_remaining() >= state.cost_expensive();
  if (!cheap_ok && !expensive_ok)
    throw InputError("random_controller_decide: no action possible");
  if (!expensive_ok) return ControllerChoice::run_cheap;
  if (!cheap_ok) return ControllerChoice::run_expensive;
  return rng.uniform() < p_cheap ? ControllerChoice::run_cheap : ControllerChoice::run_expensive;
}

}  // namespace screenbo
