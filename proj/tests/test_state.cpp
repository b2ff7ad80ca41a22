#include <doctest.h>

#include "screenbo/state.hpp"
#include "screenbo/trace.hpp"

using namespace screenbo;

namespace {

Dataset tiny_dataset(int n, int d = 1) {
  Dataset data;
  data.features = Eigen::MatrixXd::Zero(n, d);
  for (int i = 0; i < n; ++i) data.features(i, 0) = 0.1 * i;
  data.cheap_scores = Eigen::VectorXd::LinSpaced(n, 0.0, 1.0);
  data.expensive_scores = Eigen::VectorXd::LinSpaced(n, 0.0, 2.0);
  for (int i = 0; i < n; ++i) data.ids.push_back(std::to_string(i));
  return data;
}

ScreenState fresh_state(const Dataset& data, double budget, double cc, double ce) {
  return ScreenState(std::make_shared<const Eigen::MatrixXd>(data.features), budget, cc, ce);
}

}  // namespace

TEST_CASE("a fresh state offers one cheap action per candidate") {
  const Dataset data = tiny_dataset(7);
  ScreenState s = fresh_state(data, 10.0, 0.2, 1.0);
  const auto actions = available_actions(s);
  CHECK(actions.size() == 7);
  for (const auto& a : actions) CHECK(a.kind == TestKind::cheap);
}

TEST_CASE("an unaffordable state is terminal") {
  const Dataset data = tiny_dataset(4);
  ScreenState s = fresh_state(data, 0.1, 0.2, 1.0);
  CHECK(available_actions(s).empty());
  CHECK(s.terminal());
}

TEST_CASE("mixed statuses enumerate the right actions") {
  const Dataset data = tiny_dataset(3);
  ScreenState s = fresh_state(data, 100.0, 0.2, 1.0);
  s.apply({0, TestKind::cheap}, data);
  s.apply({1, TestKind::cheap}, data);
  s.apply({0, TestKind::expensive}, data);
  const auto actions = available_actions(s);
  REQUIRE(actions.size() == 2);
  CHECK(actions[0] == Action{1, TestKind::expensive});
  CHECK(actions[1] == Action{2, TestKind::cheap});
}

TEST_CASE("budget accounting after five cheap and two expensive tests") {
  const Dataset data = tiny_dataset(10);
  ScreenState s = fresh_state(data, 50.0, 0.2, 1.0);
  for (int i = 0; i < 5; ++i) s.apply({i, TestKind::cheap}, data);
  for (int i = 0; i < 2; ++i) s.apply({i, TestKind::expensive}, data);
  CHECK(s.budget_remaining() == doctest::Approx(47.0).epsilon(1e-14));
}

TEST_CASE("transition preconditions and the running maximum") {
  const Dataset data = tiny_dataset(4);
  ScreenState s = fresh_state(data, 100.0, 0.2, 1.0);
  s.apply({2, TestKind::cheap}, data);
  CHECK_THROWS_AS(s.apply({2, TestKind::cheap}, data), InputError);       // already cheap-tested
  CHECK_THROWS_AS(s.apply({0, TestKind::expensive}, data), InputError);   // no cheap score yet
  CHECK(!s.best_expensive());
  s.apply({2, TestKind::expensive}, data);
  CHECK(s.status(2) == TestStatus::fully_tested);
  CHECK(*s.best_expensive() == data.expensive_scores[2]);
  s.apply({3, TestKind::cheap}, data);
  s.apply({3, TestKind::expensive}, data);
  CHECK(*s.best_expensive() == data.expensive_scores[3]);  // larger score wins
}

TEST_CASE("optimization reward is the clamped improvement") {
  CHECK(reward_optimization(2.0, 1.0) == 1.0);
  CHECK(reward_optimization(0.5, 1.0) == 0.0);
  CHECK(reward_optimization(3.0, std::nullopt) == 0.0);  // first expensive test
}

TEST_CASE("mining reward flags the ground-truth top set") {
  const std::vector<int> top = {2, 5};
  CHECK(reward_mining(5, top) == 1.0);
  CHECK(reward_mining(1, top) == 0.0);
}

TEST_CASE("testing everything collects exactly N mining rewards") {
  const Dataset data = tiny_dataset(6);
  const auto top = true_top_n(data, 2);
  ScreenState s = fresh_state(data, 1e6, 0.2, 1.0);
  double total = 0.0;
  for (int i = 0; i < 6; ++i) {
    s.apply({i, TestKind::cheap}, data);
    s.apply({i, TestKind::expensive}, data);
    total += reward_mining(i, top);
  }
  CHECK(total == 2.0);
}

TEST_CASE("regret definitions") {
  const Dataset data = tiny_dataset(5);  // expensive scores 0, 0.5, 1, 1.5, 2
  Trace trace;
  SUBCASE("no expensive tests is scored at the worst-case gap") {
    CHECK(optimization_regret(trace, data) == 2.0);
    CHECK(mining_regret(trace, data, 2) == 2);
  }
  SUBCASE("finding the best candidate zeroes the optimization regret") {
    trace.records.push_back({0, 0, 4, TestKind::expensive, data.expensive_scores[4], 0, 0, 0});
    CHECK(optimization_regret(trace, data) == 0.0);
    CHECK(mining_regret(trace, data, 2) == 1);
  }
  SUBCASE("testing the full top set zeroes the mining regret") {
    trace.records.push_back({0, 0, 3, TestKind::expensive, data.expensive_scores[3], 0, 0, 0});
    trace.records.push_back({1, 0, 4, TestKind::expensive, data.expensive_scores[4], 0, 0, 0});
    CHECK(mining_regret(trace, data, 2) == 0);
    CHECK(optimization_regret(trace, data) == 0.0);
  }
}

TEST_CASE("true_top_n edge cases and sort-oracle agreement") {
  const Dataset data = tiny_dataset(6);
  CHECK(true_top_n(data, 6).size() == 6);
  CHECK(true_top_n(data, 1) == std::vector<int>{5});

  Dataset shuffled = data;
  shuffled.expensive_scores << 0.4, 2.2, -1.0, 2.2, 0.0, 1.7;
  CHECK(true_top_n(shuffled, 3) == std::vector<int>{1, 3, 5});
}
