#pragma once

// Discrete-event simulation of w asynchronous workers. Each worker asks the
// runner for an action, executes it for a random duration uniform on
// [cost/2, 3*cost/2] in cost-time units, then immediately asks again.
// Decisions see only completed tests; candidates in flight are locked against
// duplicate selection and their cost is reserved at dispatch so concurrent
// workers can never jointly overspend the budget.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "screenbo/engine.hpp"
#include "screenbo/rng.hpp"
#include "screenbo/state.hpp"
#include "screenbo/trace.hpp"

namespace screenbo {

struct SimEvent {
  double finish_time = 0.0;
  int worker_id = 0;
  Action action;
  double dispatch_time = 0.0;
};

namespace detail {

// Event queue ordered by (finish_time, worker_id); earliest first.
struct EventQueue {
  std::vector<SimEvent> events;

  void push(SimEvent e) { events.push_back(e); }

  SimEvent pop_earliest() {
    auto it = std::min_element(events.begin(), events.end(),
                               [](const SimEvent& a, const SimEvent& b) {
                                 return a.finish_time < b.finish_time ||
                                        (a.finish_time == b.finish_time &&
                                         a.worker_id < b.worker_id);
                               });
    SimEvent e = *it;
    events.erase(it);
    return e;
  }

  bool empty() const { return events.empty(); }
};

}  // namespace detail

// Simulate `workers` asynchronous workers over the runner's screen. Test
// durations come from a dedicated stream so that the decision stream matches
// the sequential driver's exactly; with one worker the action sequence is
// identical to run_loop's.
template <class Runner>
Trace simulate_parallel(Runner& runner, int workers, int candidate_count,
                        Rng& duration_rng) {
  if (workers < 1) throw InputError("simulate_parallel: need at least one worker");
  Trace trace;
  trace.timestamped = true;

  detail::EventQueue queue;
  std::vector<std::uint8_t> locked(static_cast<std::size_t>(candidate_count), 0);
  std::vector<int> idle;
  double reserved = 0.0;
  int step = 0;

  auto try_dispatch = [&](int worker, double now) {
    auto action = runner.next_action(locked, reserved);
    if (!action) {
      idle.push_back(worker);
      std::sort(idle.begin(), idle.end());
      return;
    }
    const double cost = runner.action_cost(*action);
    const double duration = duration_rng.uniform(0.5 * cost, 1.5 * cost);
    locked[static_cast<std::size_t>(action->candidate)] = 1;
    reserved += cost;
    queue.push({now + duration, worker, *action, now});
  };

  for (int w = 0; w < workers; ++w) try_dispatch(w, 0.0);

  while (!queue.empty()) {
    const SimEvent ev = queue.pop_earliest();
    locked[static_cast<std::size_t>(ev.action.candidate)] = 0;
    reserved -= runner.action_cost(ev.action);
    const CompletionInfo info = runner.complete(ev.action);

    TraceRecord rec;
    rec.step = step++;
    rec.worker_id = ev.worker_id;
    rec.candidate_id = ev.action.candidate;
    rec.test = ev.action.kind;
    rec.revealed_score = info.revealed;
    rec.budget_after = info.budget_after;
    rec.reward_opt = info.reward_opt;
    rec.reward_mine = info.reward_mine;
    rec.dispatch_time = ev.dispatch_time;
    rec.finish_time = ev.finish_time;
    trace.records.push_back(rec);

    // The finishing worker asks first, then any idle worker the new data may
    // have unblocked, in worker order.
    try_dispatch(ev.worker_id, ev.finish_time);
    const std::vector<int> waiting = std::move(idle);
    idle.clear();
    for (int w : waiting) try_dispatch(w, ev.finish_time);
  }
  return trace;
}

// Two-test asynchronous screen.
template <class Model>
Trace simulate_parallel(const Dataset& oracle, const Model& model, const ScreenProblem& problem,
                        const PolicyConfig& config, int workers) {
  TwoTestRunner<Model> runner(oracle, model, problem, config, workers);
  Rng duration_rng(derive_seed(config.seed, 2));
  return simulate_parallel(runner, workers, static_cast<int>(oracle.size()), duration_rng);
}

// Single-test asynchronous screen.
inline Trace simulate_parallel_single(const Dataset& oracle, const SingleTestModel& model,
                                      const ScreenProblem& problem, const PolicyConfig& config,
                                      FeatureMode mode, int workers) {
  SingleTestRunner runner(oracle, model, problem, config, mode, workers);
  Rng duration_rng(derive_seed(config.seed, 2));
  Trace trace = simulate_parallel(runner, workers, static_cast<int>(oracle.size()), duration_rng);
  trace.upfront_cheap_tests = runner.upfront_cheap_tests();
  trace.upfront_cost = runner.upfront_cost();
  return trace;
}

}  // namespace screenbo
