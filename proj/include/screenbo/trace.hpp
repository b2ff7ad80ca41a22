#pragma once

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include "screenbo/csv.hpp"
#include "screenbo/dataset.hpp"
#include "screenbo/state.hpp"

namespace screenbo {

// One executed test. Timestamps are only meaningful for traces produced by
// the asynchronous worker simulation.
struct TraceRecord {
  int step = 0;
  int worker_id = 0;
  int candidate_id = -1;
  TestKind test = TestKind::cheap;
  double revealed_score = 0.0;
  double budget_after = 0.0;
  double reward_opt = 0.0;
  double reward_mine = 0.0;
  double dispatch_time = 0.0;
  double finish_time = 0.0;
};

struct Trace {
  std::vector<TraceRecord> records;
  bool timestamped = false;

  // Cheap scores revealed outside the record stream (single-test rich mode
  // buys every cheap score up front and does not log them one by one).
  int upfront_cheap_tests = 0;
  double upfront_cost = 0.0;

  int cheap_tests() const {
    int n = upfront_cheap_tests;
    for (const auto& r : records) n += r.test == TestKind::cheap ? 1 : 0;
    return n;
  }
  int expensive_tests() const {
    int n = 0;
    for (const auto& r : records) n += r.test == TestKind::expensive ? 1 : 0;
    return n;
  }
  double total_cost(double cost_cheap, double cost_expensive) const {
    int nc = 0, ne = 0;
    for (const auto& r : records) (r.test == TestKind::cheap ? nc : ne) += 1;
    return upfront_cost + cost_cheap * nc + cost_expensive * ne;
  }
  double total_reward_opt() const {
    double s = 0.0;
    for (const auto& r : records) s += r.reward_opt;
    return s;
  }
  double total_reward_mine() const {
    double s = 0.0;
    for (const auto& r : records) s += r.reward_mine;
    return s;
  }
};

// Gap between the best expensive score in the pool and the best one found.
// A trace with no expensive test is scored at the worst-case gap max - min.
inline double optimization_regret(const Trace& trace, const Dataset& oracle) {
  const double best = oracle.expensive_scores.maxCoeff();
  bool any = false;
  double found = 0.0;
  for (const auto& r : trace.records) {
    if (r.test != TestKind::expensive) continue;
    if (!any || r.revealed_score > found) found = r.revealed_score;
    any = true;
  }
  if (!any) return best - oracle.expensive_scores.minCoeff();
  return best - found;
}

// Number of ground-truth top-N candidates the screen failed to expensive-test.
inline int mining_regret(const Trace& trace, const Dataset& oracle, int n_top) {
  const std::vector<int> top = true_top_n(oracle, n_top);
  int hit = 0;
  for (int id : top) {
    const bool tested = std::any_of(trace.records.begin(), trace.records.end(),
                                    [&](const TraceRecord& r) {
                                      return r.test == TestKind::expensive &&
                                             r.candidate_id == id;
                                    });
    hit += tested ? 1 : 0;
  }
  return n_top - hit;
}

inline void write_trace_csv(const Trace& trace, std::ostream& out) {
  out << "step,worker_id,candidate_id,test,revealed_score,budget_after,reward_opt,reward_mine";
  if (trace.timestamped) out << ",dispatch_time,finish_time";
  out << '\n';
  for (const auto& r : trace.records) {
    out << r.step << ',' << r.worker_id << ',' << r.candidate_id << ','
        << test_kind_name(r.test) << ',' << format_double(r.revealed_score) << ','
        << format_double(r.budget_after) << ',' << format_double(r.reward_opt) << ','
        << format_double(r.reward_mine);
    if (trace.timestamped)
      out << ',' << format_double(r.dispatch_time) << ',' << format_double(r.finish_time);
    out << '\n';
  }
}

inline void write_trace_csv(const Trace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  write_trace_csv(trace, out);
}

}  // namespace screenbo
