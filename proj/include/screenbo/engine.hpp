#pragma once

// The screening loops. A runner owns one trial's state, model and rng and
// hands out one action at a time; the sequential driver and the asynchronous
// worker simulation share the same runner, so the decision logic (and its
// random stream) is identical in both.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "screenbo/acquisition.hpp"
#include "screenbo/dataset.hpp"
#include "screenbo/models.hpp"
#include "screenbo/policy.hpp"
#include "screenbo/state.hpp"
#include "screenbo/trace.hpp"

namespace screenbo {

struct CompletionInfo {
  double revealed = 0.0;
  double budget_after = 0.0;
  double reward_opt = 0.0;
  double reward_mine = 0.0;
};

namespace detail {

inline std::vector<int> unlocked(const std::vector<int>& ids,
                                 const std::vector<std::uint8_t>& locked) {
  if (locked.empty()) return ids;
  std::vector<int> out;
  out.reserve(ids.size());
  for (int id : ids)
    if (!locked[static_cast<std::size_t>(id)]) out.push_back(id);
  return out;
}

inline std::vector<int> sorted_union(std::vector<int> a, const std::vector<int>& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  return a;
}

// Mean-ranking argmax used when expected improvement has no running maximum
// yet. Ties go to the lower id.
inline int mean_argmax(const GaussianMarginals& m) {
  AcquisitionValues v{m.ids, m.mean};
  return v.argmax();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Greedy controller (two-test)
// ---------------------------------------------------------------------------

// Everything the greedy decision rule needs besides the state: the current
// acquisition value of the expensive-side candidate and the per-acquisition
// parameters used when re-scoring under hypothetical cheap data.
struct ControllerContext {
  AcquisitionKind acquisition = AcquisitionKind::threshold;
  double alpha_tu_current = 0.0;
  double y_max = 0.0;                  // expected improvement
  double tau = 0.0;                    // threshold
  int n_top = 1;                       // mining
  std::vector<int> ranking_ids;        // mining: candidates competing for top-N
  int mining_inner_draws = 128;
};

// Compare the reward-per-cost of "cheap-test the best untested candidate,
// then expensive-test whichever of the two by then looks best" against
// "expensive-test the best cheap-tested candidate now". The expectation over
// the hypothetical cheap score is estimated with m_outer posterior draws.
template <class Model>
ControllerChoice greedy_controller_decide(const ScreenState& state, const Model& model,
                                          int best_untested, int best_cheap_tested,
                                          const ControllerContext& ctx, int m_outer,
                                          Rng& rng) {
  if (best_untested < 0 && best_cheap_tested < 0)
    throw InputError("greedy_controller_decide: no candidates on either side");
  if (best_cheap_tested < 0) return ControllerChoice::run_cheap;
  if (best_untested < 0) return ControllerChoice::run_expensive;
  const double pair_cost = state.cost_cheap() + state.cost_expensive();
  if (state.budget_remaining() < pair_cost) return ControllerChoice::run_expensive;

  const GaussianMarginals cheap_marg = model.predict_cheap(state, {best_untested});
  const double mu = cheap_marg.mean[0];
  const double sd = std::sqrt(cheap_marg.var[0]);

  double acc = 0.0;
  for (int s = 0; s < m_outer; ++s) {
    const double y_draw = mu + sd * rng.normal();
    double a_uu, a_tu;
    if (ctx.acquisition == AcquisitionKind::mining) {
      ScreenState hyp = state;
      hyp.reveal_cheap_unpaid(best_untested, y_draw);
      SampleSet joint =
          model.joint_expensive_samples(hyp, ctx.ranking_ids, ctx.mining_inner_draws, rng);
      const AcquisitionValues av = greedy_mining(joint, ctx.n_top);
      a_uu = av.value_of(best_untested);
      a_tu = av.value_of(best_cheap_tested);
    } else {
      const GaussianMarginals mm = model.expensive_marginals_given_cheap(
          state, best_untested, y_draw, {best_untested, best_cheap_tested});
      if (ctx.acquisition == AcquisitionKind::expected_improvement) {
        a_uu = expected_improvement_value(mm.mean[0], mm.var[0], ctx.y_max);
        a_tu = expected_improvement_value(mm.mean[1], mm.var[1], ctx.y_max);
      } else {
        a_uu = threshold_probability_value(mm.mean[0], mm.var[0], ctx.tau);
        a_tu = threshold_probability_value(mm.mean[1], mm.var[1], ctx.tau);
      }
    }
    acc += std::max(a_uu, a_tu);
  }
  const double sequence_value = acc / static_cast<double>(m_outer);
  const bool take_cheap =
      sequence_value / pair_cost > ctx.alpha_tu_current / state.cost_expensive();
  return take_cheap ? ControllerChoice::run_cheap : ControllerChoice::run_expensive;
}

// ---------------------------------------------------------------------------
// Two-test runner
// ---------------------------------------------------------------------------

template <class Model>
class TwoTestRunner {
 public:
  TwoTestRunner(const Dataset& oracle, Model model, const ScreenProblem& problem,
                PolicyConfig config, int workers = 1)
      : oracle_(&oracle),
        model_(std::move(model)),
        config_(std::move(config)),
        problem_(problem),
        state_(std::make_shared<const Eigen::MatrixXd>(oracle.features), problem.budget,
               problem.cost_cheap, problem.cost_expensive),
        truth_top_(true_top_n(oracle, problem.top_n)),
        decision_rng_(derive_seed(config_.seed, 1)),
        init_cheap_target_(config_.init.resolve_random_cheap(workers)) {
    config_.validate();
    if (problem.top_n < 1 || problem.top_n > oracle.size())
      throw InputError("TwoTestRunner: top_n out of range");
    p_cheap_ = config_.cheap_action_probability.value_or(
        default_cheap_action_probability(problem.cost_cheap, problem.cost_expensive));
  }

  const ScreenState& state() const { return state_; }
  const Model& model() const { return model_; }

  double action_cost(const Action& a) const {
    return a.kind == TestKind::cheap ? state_.cost_cheap() : state_.cost_expensive();
  }

  // Decide the next test given currently revealed data. Locked candidates
  // (in flight elsewhere) are not selectable and reserved budget is not
  // spendable. Returns nothing when no test can be dispatched.
  std::optional<Action> next_action(const std::vector<std::uint8_t>& locked = {},
                                    double reserved = 0.0) {
    const double budget = state_.budget_remaining() - reserved;
    std::vector<int> open_untested = detail::unlocked(state_.untested_ids(), locked);
    std::vector<int> open_cheap_tested = detail::unlocked(state_.cheap_tested_ids(), locked);
    const bool can_cheap = !open_untested.empty() && budget >= state_.cost_cheap();
    const bool can_expensive =
        !open_cheap_tested.empty() && budget >= state_.cost_expensive();
    if (!can_cheap && !can_expensive) return std::nullopt;

    maybe_refit();

    // Initialization: random cheap tests, then one forced expensive test.
    const bool init_cheap_pending = cheap_dispatched_ < init_cheap_target_;
    const bool first_expensive_pending =
        config_.init.force_first_expensive && expensive_dispatched_ == 0;
    if (init_cheap_pending || first_expensive_pending) {
      if (init_cheap_pending && can_cheap) return dispatch_random_cheap(open_untested);
      if (first_expensive_pending) {
        if (can_expensive) return dispatch_expensive(first_expensive_pick(open_cheap_tested));
        if (can_cheap) return dispatch_random_cheap(open_untested);
        return std::nullopt;
      }
      // Random phase unsatisfiable (pool or budget exhausted): fall through.
    }

    if (config_.acquisition == AcquisitionKind::threshold) refresh_threshold_if_due();

    const StepAcquisition acq = evaluate_step(open_untested, open_cheap_tested);
    const int best_untested = acq.untested.ids.empty() ? -1 : acq.untested.argmax();
    const int best_cheap_tested =
        acq.cheap_tested.ids.empty() ? -1 : acq.cheap_tested.argmax();

    if (!can_expensive) return dispatch_cheap(best_untested);
    if (!can_cheap) return dispatch_expensive(best_cheap_tested);

    ControllerChoice choice;
    if (config_.controller == ControllerKind::random) {
      choice = decision_rng_.uniform() < p_cheap_ ? ControllerChoice::run_cheap
                                                  : ControllerChoice::run_expensive;
    } else if (budget < state_.cost_cheap() + state_.cost_expensive()) {
      // Not enough left to run the cheap-then-expensive sequence.
      choice = ControllerChoice::run_expensive;
    } else if (config_.acquisition == AcquisitionKind::expected_improvement &&
               !state_.best_expensive()) {
      // No running maximum yet, so improvement is undefined; establish one.
      choice = ControllerChoice::run_expensive;
    } else {
      ControllerContext ctx;
      ctx.acquisition = config_.acquisition;
      ctx.alpha_tu_current = acq.cheap_tested.value_of(best_cheap_tested);
      ctx.y_max = state_.best_expensive().value_or(0.0);
      ctx.tau = tau_.tau;
      ctx.n_top = problem_.top_n;
      ctx.mining_inner_draws = config_.mc.controller_mining_draws;
      if (ctx.acquisition == AcquisitionKind::mining)
        ctx.ranking_ids = ranking_ids(open_untested, open_cheap_tested);
      choice = greedy_controller_decide(state_, model_, best_untested, best_cheap_tested, ctx,
                                        config_.mc.controller_outer_draws, decision_rng_);
    }
    return choice == ControllerChoice::run_cheap ? dispatch_cheap(best_untested)
                                                 : dispatch_expensive(best_cheap_tested);
  }

  // Reveal the score of a dispatched action and collect the reward signals.
  CompletionInfo complete(const Action& a) {
    const std::optional<double> best_before = state_.best_expensive();
    const double revealed = state_.apply(a, *oracle_);
    CompletionInfo info;
    info.revealed = revealed;
    info.budget_after = state_.budget_remaining();
    if (a.kind == TestKind::expensive) {
      if (tau_.sample_count > 0) ++tau_.age;
      info.reward_opt = reward_optimization(revealed, best_before);
      info.reward_mine = reward_mining(a.candidate, truth_top_);
    }
    return info;
  }

 private:
  struct StepAcquisition {
    AcquisitionValues untested;
    AcquisitionValues cheap_tested;
  };

  std::optional<Action> dispatch_random_cheap(const std::vector<int>& open_untested) {
    const auto pick = decision_rng_.uniform_index(open_untested.size());
    return dispatch_cheap(open_untested[static_cast<std::size_t>(pick)]);
  }

  std::optional<Action> dispatch_cheap(int id) {
    ++cheap_dispatched_;
    return Action{id, TestKind::cheap};
  }

  std::optional<Action> dispatch_expensive(int id) {
    ++expensive_dispatched_;
    return Action{id, TestKind::expensive};
  }

  int first_expensive_pick(const std::vector<int>& open_cheap_tested) {
    switch (config_.acquisition) {
      case AcquisitionKind::expected_improvement:
        return detail::mean_argmax(model_.expensive_marginals(state_, open_cheap_tested));
      case AcquisitionKind::threshold:
        refresh_threshold_if_due();
        return greedy_threshold(model_.expensive_marginals(state_, open_cheap_tested), tau_.tau)
            .argmax();
      case AcquisitionKind::mining: {
        SampleSet joint = model_.joint_expensive_samples(
            state_, ranking_ids(detail::unlocked(state_.untested_ids(), {}), open_cheap_tested),
            config_.mc.acquisition_draws, decision_rng_);
        const AcquisitionValues av = greedy_mining(joint, problem_.top_n);
        AcquisitionValues restricted;
        restricted.ids = open_cheap_tested;
        restricted.values.resize(static_cast<Eigen::Index>(open_cheap_tested.size()));
        for (std::size_t i = 0; i < open_cheap_tested.size(); ++i)
          restricted.values[static_cast<Eigen::Index>(i)] = av.value_of(open_cheap_tested[i]);
        return restricted.argmax();
      }
      case AcquisitionKind::thompson: {
        SampleSet draw =
            model_.joint_expensive_samples(state_, open_cheap_tested, 1, decision_rng_);
        return thompson(draw).argmax();
      }
    }
    throw InputError("unreachable acquisition kind");
  }

  void maybe_refit() {
    if (!config_.refit) return;
    if (state_.revealed_count() - last_refit_revealed_ < config_.mc.refit_interval) return;
    RefitSettings settings = config_.refit_settings;
    settings.seed = derive_seed(config_.seed, 100 + static_cast<std::uint64_t>(refit_count_));
    model_ = model_.refit(state_, settings);
    last_refit_revealed_ = state_.revealed_count();
    ++refit_count_;
  }

  void refresh_threshold_if_due() {
    if (tau_.sample_count > 0 && tau_.age < config_.mc.threshold_refresh) return;
    std::vector<int> pool = pooled_untested(state_.untested_ids());
    SampleSet joint = model_.joint_expensive_samples(
        state_,
        detail::sorted_union(detail::sorted_union(pool, state_.cheap_tested_ids()),
                             state_.fully_tested_ids()),
        config_.mc.threshold_draws, decision_rng_);
    tau_ = estimate_threshold(joint, problem_.top_n);
  }

  std::vector<int> pooled_untested(std::vector<int> untested) {
    if (static_cast<int>(untested.size()) <= config_.mc.pool_cap) return untested;
    std::vector<int> picks = decision_rng_.sample_without_replacement(
        static_cast<int>(untested.size()), config_.mc.pool_cap);
    std::vector<int> out;
    out.reserve(picks.size());
    for (int p : picks) out.push_back(untested[static_cast<std::size_t>(p)]);
    std::sort(out.begin(), out.end());
    return out;
  }

  std::vector<int> ranking_ids(const std::vector<int>& open_untested,
                               const std::vector<int>& open_cheap_tested) {
    return detail::sorted_union(
        detail::sorted_union(pooled_untested(open_untested), open_cheap_tested),
        state_.fully_tested_ids());
  }

  StepAcquisition evaluate_step(const std::vector<int>& open_untested_all,
                                const std::vector<int>& open_cheap_tested) {
    StepAcquisition out;
    const std::vector<int> pool = pooled_untested(open_untested_all);

    switch (config_.acquisition) {
      case AcquisitionKind::thompson: {
        const std::vector<int> open = detail::sorted_union(pool, open_cheap_tested);
        if (open.empty()) return out;
        SampleSet draw = model_.joint_expensive_samples(state_, open, 1, decision_rng_);
        const AcquisitionValues av = thompson(draw);
        split_by_status(av, out);
        return out;
      }
      case AcquisitionKind::mining: {
        const std::vector<int> ranking = ranking_ids(pool, open_cheap_tested);
        if (ranking.empty()) return out;
        SampleSet joint = model_.joint_expensive_samples(state_, ranking,
                                                         config_.mc.acquisition_draws,
                                                         decision_rng_);
        const AcquisitionValues av = greedy_mining(joint, problem_.top_n);
        split_by_status(av, out);
        return out;
      }
      case AcquisitionKind::expected_improvement:
      case AcquisitionKind::threshold: {
        const bool use_ei = config_.acquisition == AcquisitionKind::expected_improvement;
        const std::optional<double> y_max = state_.best_expensive();
        auto marginal_values = [&](const GaussianMarginals& m) {
          if (use_ei && !y_max) return AcquisitionValues{m.ids, m.mean};  // mean ranking
          return use_ei ? greedy_expected_improvement(m, *y_max)
                        : greedy_threshold(m, tau_.tau);
        };
        if (!open_cheap_tested.empty())
          out.cheap_tested = marginal_values(model_.expensive_marginals(state_, open_cheap_tested));
        if (!pool.empty()) {
          if constexpr (Model::kGaussianUntestedMarginals) {
            out.untested = marginal_values(model_.expensive_marginals(state_, pool));
          } else {
            SampleSet ss = model_.marginal_expensive_samples(
                state_, pool, config_.mc.acquisition_draws, decision_rng_);
            if (use_ei && !y_max) {
              AcquisitionValues av{ss.candidate_ids,
                                   ss.draws.colwise().mean().transpose()};
              out.untested = std::move(av);
            } else {
              out.untested = use_ei ? greedy_expected_improvement(ss, *y_max)
                                    : greedy_threshold(ss, tau_.tau);
            }
          }
        }
        return out;
      }
    }
    return out;
  }

  void split_by_status(const AcquisitionValues& av, StepAcquisition& out) const {
    for (std::size_t i = 0; i < av.ids.size(); ++i) {
      const int id = av.ids[i];
      const double v = av.values[static_cast<Eigen::Index>(i)];
      if (state_.status(id) == TestStatus::untested) {
        out.untested.ids.push_back(id);
        untested_buffer_.push_back(v);
      } else if (state_.status(id) == TestStatus::cheap_tested) {
        out.cheap_tested.ids.push_back(id);
        cheap_tested_buffer_.push_back(v);
      }
    }
    out.untested.values = Eigen::Map<const Vector>(
        untested_buffer_.data(), static_cast<Eigen::Index>(untested_buffer_.size()));
    out.cheap_tested.values = Eigen::Map<const Vector>(
        cheap_tested_buffer_.data(), static_cast<Eigen::Index>(cheap_tested_buffer_.size()));
    untested_buffer_.clear();
    cheap_tested_buffer_.clear();
  }

  const Dataset* oracle_;
  Model model_;
  PolicyConfig config_;
  ScreenProblem problem_;
  ScreenState state_;
  std::vector<int> truth_top_;
  Rng decision_rng_;
  double p_cheap_ = 0.5;
  int init_cheap_target_ = 0;
  int cheap_dispatched_ = 0;
  int expensive_dispatched_ = 0;
  int last_refit_revealed_ = 0;
  int refit_count_ = 0;
  ThresholdEstimate tau_;
  mutable std::vector<double> untested_buffer_;
  mutable std::vector<double> cheap_tested_buffer_;
};

// ---------------------------------------------------------------------------
// Single-test runner (Poor / Rich baselines)
// ---------------------------------------------------------------------------

enum class FeatureMode { poor, rich };

// One GP over the working features for the expensive score.
struct SingleTestModel {
  KernelSpec spec;
  double sigma_expensive = 1.0;
};

class SingleTestRunner {
 public:
  SingleTestRunner(const Dataset& oracle, SingleTestModel model, const ScreenProblem& problem,
                   PolicyConfig config, FeatureMode mode, int workers = 1)
      : oracle_(&oracle),
        model_(std::move(model)),
        config_(std::move(config)),
        problem_(problem),
        mode_(mode),
        truth_top_(true_top_n(oracle, problem.top_n)),
        decision_rng_(derive_seed(config_.seed, 1)),
        budget_(problem.budget),
        tested_(static_cast<std::size_t>(oracle.size()), 0),
        revealed_(oracle.size()),
        init_target_(config_.init.resolve_random_cheap(workers)) {
    if (problem.top_n < 1 || problem.top_n > oracle.size())
      throw InputError("SingleTestRunner: top_n out of range");
    if (mode_ == FeatureMode::rich) {
      features_.resize(oracle.size(), oracle.dim() + 1);
      features_.leftCols(oracle.dim()) = oracle.features;
      features_.col(oracle.dim()) = oracle.cheap_scores;  // pre-purchased cheap scores
      upfront_cheap_tests_ = static_cast<int>(oracle.size());
      upfront_cost_ = static_cast<double>(oracle.size()) * problem.cost_cheap;
    } else {
      features_ = oracle.features;
    }
    if (model_.spec.input_dim() != features_.cols())
      throw InputError("SingleTestRunner: kernel dimension does not match working features");
  }

  int upfront_cheap_tests() const { return upfront_cheap_tests_; }
  double upfront_cost() const { return upfront_cost_; }
  double budget_remaining() const { return budget_; }

  double action_cost(const Action&) const { return problem_.cost_expensive; }

  std::optional<Action> next_action(const std::vector<std::uint8_t>& locked = {},
                                    double reserved = 0.0) {
    if (budget_ - reserved < problem_.cost_expensive) return std::nullopt;
    std::vector<int> open;
    for (int i = 0; i < static_cast<int>(tested_.size()); ++i)
      if (!tested_[static_cast<std::size_t>(i)] &&
          (locked.empty() || !locked[static_cast<std::size_t>(i)]))
        open.push_back(i);
    if (open.empty()) return std::nullopt;

    if (dispatched_ < init_target_) {
      ++dispatched_;
      const auto pick = decision_rng_.uniform_index(open.size());
      return Action{open[pick], TestKind::expensive};
    }

    maybe_refit();
    const GaussianProcess gp = condition();
    AcquisitionValues av;
    switch (config_.acquisition) {
      case AcquisitionKind::thompson: {
        av = thompson(joint_samples(gp, open, 1));
        break;
      }
      case AcquisitionKind::threshold: {
        refresh_threshold_if_due(gp);
        av = greedy_threshold(marginals(gp, open), tau_.tau);
        break;
      }
      case AcquisitionKind::expected_improvement: {
        const GaussianMarginals m = marginals(gp, open);
        av = best_ ? greedy_expected_improvement(m, *best_) : AcquisitionValues{m.ids, m.mean};
        break;
      }
      case AcquisitionKind::mining: {
        std::vector<int> ranking = all_ids();
        av = greedy_mining(joint_samples(gp, ranking, config_.mc.acquisition_draws),
                           problem_.top_n);
        AcquisitionValues restricted;
        restricted.ids = open;
        restricted.values.resize(static_cast<Eigen::Index>(open.size()));
        for (std::size_t i = 0; i < open.size(); ++i)
          restricted.values[static_cast<Eigen::Index>(i)] = av.value_of(open[i]);
        av = std::move(restricted);
        break;
      }
    }
    ++dispatched_;
    return Action{av.argmax(), TestKind::expensive};
  }

  CompletionInfo complete(const Action& a) {
    if (a.kind != TestKind::expensive || tested_[static_cast<std::size_t>(a.candidate)])
      throw InputError("SingleTestRunner::complete: bad action");
    const double y = oracle_->expensive_scores[a.candidate];
    tested_[static_cast<std::size_t>(a.candidate)] = 1;
    revealed_[a.candidate] = y;
    budget_ -= problem_.cost_expensive;
    ++completed_;
    if (tau_.sample_count > 0) ++tau_.age;
    CompletionInfo info;
    info.revealed = y;
    info.budget_after = budget_;
    info.reward_opt = best_ ? std::max(y - *best_, 0.0) : 0.0;
    info.reward_mine = reward_mining(a.candidate, truth_top_);
    if (!best_ || y > *best_) best_ = y;
    return info;
  }

 private:
  GaussianProcess condition() const {
    std::vector<int> ids;
    for (int i = 0; i < static_cast<int>(tested_.size()); ++i)
      if (tested_[static_cast<std::size_t>(i)]) ids.push_back(i);
    Matrix x(static_cast<Eigen::Index>(ids.size()), features_.cols());
    Vector y(static_cast<Eigen::Index>(ids.size()));
    for (std::size_t j = 0; j < ids.size(); ++j) {
      x.row(static_cast<Eigen::Index>(j)) = features_.row(ids[j]);
      y[static_cast<Eigen::Index>(j)] = revealed_[ids[j]];
    }
    KernelSpec latent = model_.spec;
    latent.noise_variance = 0.0;
    const double ve = model_.sigma_expensive * model_.sigma_expensive + model_.spec.noise_variance;
    return GaussianProcess::fit(x, y, latent,
                                Vector::Constant(static_cast<Eigen::Index>(ids.size()), ve));
  }

  GaussianMarginals marginals(const GaussianProcess& gp, const std::vector<int>& ids) const {
    Matrix xq(static_cast<Eigen::Index>(ids.size()), features_.cols());
    for (std::size_t j = 0; j < ids.size(); ++j)
      xq.row(static_cast<Eigen::Index>(j)) = features_.row(ids[j]);
    auto [mu, var] = gp.marginals(xq);
    var.array() += model_.sigma_expensive * model_.sigma_expensive;
    return {ids, std::move(mu), std::move(var)};
  }

  SampleSet joint_samples(const GaussianProcess& gp, const std::vector<int>& ids,
                          Eigen::Index m) {
    SampleSet out;
    out.candidate_ids = ids;
    out.draws.resize(m, static_cast<Eigen::Index>(ids.size()));
    out.pinned.assign(ids.size(), 0);
    std::vector<int> open_ids;
    std::vector<int> open_pos;
    for (std::size_t j = 0; j < ids.size(); ++j) {
      if (tested_[static_cast<std::size_t>(ids[j])]) {
        out.pinned[j] = 1;
        out.draws.col(static_cast<Eigen::Index>(j)).setConstant(revealed_[ids[j]]);
      } else {
        open_ids.push_back(ids[j]);
        open_pos.push_back(static_cast<int>(j));
      }
    }
    if (m == 0 || open_ids.empty()) return out;
    Matrix xq(static_cast<Eigen::Index>(open_ids.size()), features_.cols());
    for (std::size_t j = 0; j < open_ids.size(); ++j)
      xq.row(static_cast<Eigen::Index>(j)) = features_.row(open_ids[j]);
    const Matrix draws = gp.sample(xq, m, decision_rng_,
                                   model_.sigma_expensive * model_.sigma_expensive);
    for (std::size_t j = 0; j < open_ids.size(); ++j)
      out.draws.col(open_pos[j]) = draws.col(static_cast<Eigen::Index>(j));
    return out;
  }

  std::vector<int> all_ids() const {
    std::vector<int> ids(tested_.size());
    std::iota(ids.begin(), ids.end(), 0);
    return ids;
  }

  void maybe_refit() {
    if (!config_.refit) return;
    if (completed_ - last_refit_completed_ < config_.mc.refit_interval) return;
    std::vector<int> ids;
    for (int i = 0; i < static_cast<int>(tested_.size()); ++i)
      if (tested_[static_cast<std::size_t>(i)]) ids.push_back(i);
    if (ids.size() < 2) return;
    Matrix x(static_cast<Eigen::Index>(ids.size()), features_.cols());
    Vector y(static_cast<Eigen::Index>(ids.size()));
    for (std::size_t j = 0; j < ids.size(); ++j) {
      x.row(static_cast<Eigen::Index>(j)) = features_.row(ids[j]);
      y[static_cast<Eigen::Index>(j)] = revealed_[ids[j]];
    }
    RefitSettings settings = config_.refit_settings;
    settings.seed = derive_seed(config_.seed, 200 + static_cast<std::uint64_t>(refit_count_));
    auto [spec, sigma] = detail::refit_single_gp(x, y, model_.spec, model_.sigma_expensive,
                                                 settings, 23);
    model_.spec = spec;
    model_.sigma_expensive = sigma;
    last_refit_completed_ = completed_;
    ++refit_count_;
  }

  void refresh_threshold_if_due(const GaussianProcess& gp) {
    if (tau_.sample_count > 0 && tau_.age < config_.mc.threshold_refresh) return;
    tau_ = estimate_threshold(joint_samples(gp, all_ids(), config_.mc.threshold_draws),
                              problem_.top_n);
  }

  const Dataset* oracle_;
  SingleTestModel model_;
  PolicyConfig config_;
  ScreenProblem problem_;
  FeatureMode mode_;
  Matrix features_;  // working features (expanded in rich mode)
  std::vector<int> truth_top_;
  Rng decision_rng_;
  double budget_;
  std::vector<std::uint8_t> tested_;
  Vector revealed_;
  std::optional<double> best_;
  int init_target_ = 0;
  int dispatched_ = 0;
  int completed_ = 0;
  int last_refit_completed_ = 0;
  int refit_count_ = 0;
  ThresholdEstimate tau_;
  int upfront_cheap_tests_ = 0;
  double upfront_cost_ = 0.0;
};

// ---------------------------------------------------------------------------
// Sequential driver
// ---------------------------------------------------------------------------

// Run a trial to termination, one test at a time.
template <class Runner>
Trace run_loop(Runner& runner) {
  Trace trace;
  int step = 0;
  while (auto action = runner.next_action()) {
    const CompletionInfo info = runner.complete(*action);
    TraceRecord rec;
    rec.step = step++;
    rec.worker_id = 0;
    rec.candidate_id = action->candidate;
    rec.test = action->kind;
    rec.revealed_score = info.revealed;
    rec.budget_after = info.budget_after;
    rec.reward_opt = info.reward_opt;
    rec.reward_mine = info.reward_mine;
    trace.records.push_back(rec);
  }
  return trace;
}

// Two-test screen, Algorithm-2 style loop.
template <class Model>
Trace run_sequential(const Dataset& oracle, const Model& model, const ScreenProblem& problem,
                     const PolicyConfig& config) {
  TwoTestRunner<Model> runner(oracle, model, problem, config, 1);
  return run_loop(runner);
}

// Single-test screen over the expensive test only; rich mode buys every cheap
// score up front and appends it to the feature matrix.
inline Trace run_single_test(const Dataset& oracle, const SingleTestModel& model,
                             const ScreenProblem& problem, const PolicyConfig& config,
                             FeatureMode mode) {
  SingleTestRunner runner(oracle, model, problem, config, mode, 1);
  Trace trace = run_loop(runner);
  trace.upfront_cheap_tests = runner.upfront_cheap_tests();
  trace.upfront_cost = runner.upfront_cost();
  return trace;
}

}  // namespace screenbo
