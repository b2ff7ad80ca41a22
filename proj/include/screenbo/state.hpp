#pragma once

// The screening MDP: per-candidate test status, revealed scores, budget
// accounting and the reward signals. The sequential restriction (cheap before
// expensive) is baked into the transition rule, so a candidate with an
// expensive score but no cheap score is unrepresentable here.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "screenbo/dataset.hpp"
#include "screenbo/errors.hpp"

namespace screenbo {

enum class TestKind { cheap, expensive };

inline const char* test_kind_name(TestKind k) {
  return k == TestKind::cheap ? "cheap" : "expensive";
}

enum class TestStatus { untested, cheap_tested, fully_tested };

struct Action {
  int candidate = -1;
  TestKind kind = TestKind::cheap;

  bool operator==(const Action&) const = default;
};

class ScreenState {
 public:
  ScreenState() = default;

  ScreenState(std::shared_ptr<const Eigen::MatrixXd> features, double budget,
              double cost_cheap, double cost_expensive)
      : features_(std::move(features)),
        status_(static_cast<std::size_t>(features_->rows()), TestStatus::untested),
        cheap_(Eigen::VectorXd::Constant(features_->rows(),
                                         std::numeric_limits<double>::quiet_NaN())),
        expensive_(Eigen::VectorXd::Constant(features_->rows(),
                                             std::numeric_limits<double>::quiet_NaN())),
        budget_(budget),
        cost_cheap_(cost_cheap),
        cost_expensive_(cost_expensive) {
    if (!(cost_cheap > 0.0) || !(cost_expensive > 0.0))
      throw InputError("ScreenState: costs must be positive");
  }

  int size() const { return features_ ? static_cast<int>(features_->rows()) : 0; }
  const Eigen::MatrixXd& features() const { return *features_; }
  std::shared_ptr<const Eigen::MatrixXd> features_ptr() const { return features_; }

  TestStatus status(int id) const { return status_[static_cast<std::size_t>(id)]; }
  double cheap_score(int id) const { return cheap_[id]; }
  double expensive_score(int id) const { return expensive_[id]; }
  double budget_remaining() const { return budget_; }
  double cost_cheap() const { return cost_cheap_; }
  double cost_expensive() const { return cost_expensive_; }
  int cheap_tested_count() const { return n_cheap_tested_; }
  int fully_tested_count() const { return n_fully_tested_; }
  int untested_count() const { return size() - n_cheap_tested_ - n_fully_tested_; }
  int revealed_count() const { return n_cheap_tested_ + 2 * n_fully_tested_; }

  // Running maximum of revealed expensive scores; empty until the first
  // expensive test.
  std::optional<double> best_expensive() const { return best_expensive_; }

  std::vector<int> untested_ids() const { return ids_with(TestStatus::untested); }
  std::vector<int> cheap_tested_ids() const { return ids_with(TestStatus::cheap_tested); }
  std::vector<int> fully_tested_ids() const { return ids_with(TestStatus::fully_tested); }

  bool action_available(const Action& a) const {
    if (a.candidate < 0 || a.candidate >= size()) return false;
    if (a.kind == TestKind::cheap)
      return status(a.candidate) == TestStatus::untested && budget_ >= cost_cheap_;
    return status(a.candidate) == TestStatus::cheap_tested && budget_ >= cost_expensive_;
  }

  bool terminal() const {
    const bool any_cheap = untested_count() > 0 && budget_ >= cost_cheap_;
    const bool any_expensive = n_cheap_tested_ > 0 && budget_ >= cost_expensive_;
    return !any_cheap && !any_expensive;
  }

  // Reveal the oracle's score for an available action, charge its cost and
  // advance the status. Returns the revealed score.
  double apply(const Action& a, const Dataset& oracle) {
    if (!action_available(a))
      throw InputError("apply_action: action (" + std::to_string(a.candidate) + ", " +
                       test_kind_name(a.kind) + ") is not available");
    if (oracle.size() != size())
      throw InputError("apply_action: oracle size mismatch");
    if (a.kind == TestKind::cheap) {
      const double y = oracle.cheap_scores[a.candidate];
      cheap_[a.candidate] = y;
      status_[static_cast<std::size_t>(a.candidate)] = TestStatus::cheap_tested;
      ++n_cheap_tested_;
      budget_ -= cost_cheap_;
      return y;
    }
    const double y = oracle.expensive_scores[a.candidate];
    expensive_[a.candidate] = y;
    status_[static_cast<std::size_t>(a.candidate)] = TestStatus::fully_tested;
    --n_cheap_tested_;
    ++n_fully_tested_;
    budget_ -= cost_expensive_;
    if (!best_expensive_ || y > *best_expensive_) best_expensive_ = y;
    return y;
  }

  // Inject a cheap score without charging the budget. This is for posing
  // hypothetical what-if data to the models (controller lookahead); the
  // regular transition path is apply().
  void reveal_cheap_unpaid(int id, double value) {
    if (status(id) != TestStatus::untested)
      throw InputError("reveal_cheap_unpaid: candidate already cheap-tested");
    cheap_[id] = value;
    status_[static_cast<std::size_t>(id)] = TestStatus::cheap_tested;
    ++n_cheap_tested_;
  }

 private:
  std::vector<int> ids_with(TestStatus s) const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i)
      if (status_[static_cast<std::size_t>(i)] == s) out.push_back(i);
    return out;
  }

  std::shared_ptr<const Eigen::MatrixXd> features_;
  std::vector<TestStatus> status_;
  Eigen::VectorXd cheap_;
  Eigen::VectorXd expensive_;
  double budget_ = 0.0;
  double cost_cheap_ = 1.0;
  double cost_expensive_ = 1.0;
  int n_cheap_tested_ = 0;
  int n_fully_tested_ = 0;
  std::optional<double> best_expensive_;
};

// Materialized action set: every affordable cheap test on an untested
// candidate plus every affordable expensive test on a cheap-tested one.
// Empty means the state is terminal.
inline std::vector<Action> available_actions(const ScreenState& state) {
  std::vector<Action> out;
  const bool can_cheap = state.budget_remaining() >= state.cost_cheap();
  const bool can_expensive = state.budget_remaining() >= state.cost_expensive();
  for (int i = 0; i < state.size(); ++i) {
    if (can_cheap && state.status(i) == TestStatus::untested)
      out.push_back({i, TestKind::cheap});
    if (can_expensive && state.status(i) == TestStatus::cheap_tested)
      out.push_back({i, TestKind::expensive});
  }
  return out;
}

// Improvement in the running maximum (zero for the first expensive test,
// where there is no running maximum yet).
inline double reward_optimization(double revealed_expensive,
                                  std::optional<double> best_before) {
  if (!best_before) return 0.0;
  return std::max(revealed_expensive - *best_before, 0.0);
}

// 1 iff the candidate is in the ground-truth top-N. Only the harness can
// evaluate this; the screening agent never sees it.
inline double reward_mining(int candidate, const std::vector<int>& truth_top_n) {
  for (int id : truth_top_n)
    if (id == candidate) return 1.0;
  return 0.0;
}

}  // namespace screenbo
