#pragma once

// The two generative models of (cheap, expensive) test scores and the
// Monte-Carlo machinery for the posterior over expensive scores given the
// partially revealed data of a screen.
//
// Multi-fidelity: both scores are noisy reads of one latent GP f(x), so every
// posterior is Gaussian and conditioning is exact.
//
// Covariate: the expensive score is g(x, y_cheap) + noise for a second GP g.
// The composite posterior over the expensive score of a candidate whose
// cheap score is unknown is non-Gaussian; it is sampled by first drawing the
// cheap score from the f-posterior and then drawing g at the sampled
// augmented input. Sequential screening keeps the "expensive without cheap"
// state unreachable, which is what makes this two-stage scheme exact.

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "screenbo/gp.hpp"
#include "screenbo/hyperopt.hpp"
#include "screenbo/kernel.hpp"
#include "screenbo/rng.hpp"
#include "screenbo/state.hpp"

namespace screenbo {

// Joint posterior draws of expensive scores over a set of candidates.
// Columns of fully tested candidates are pinned to their observed scores.
struct SampleSet {
  std::vector<int> candidate_ids;   // column order
  Matrix draws;                     // m x k
  std::vector<std::uint8_t> pinned; // per column

  Eigen::Index draw_count() const { return draws.rows(); }
  Eigen::Index candidate_count() const { return static_cast<Eigen::Index>(candidate_ids.size()); }
};

// Per-candidate Gaussian marginals (mean, variance).
struct GaussianMarginals {
  std::vector<int> ids;
  Vector mean;
  Vector var;
};

struct RefitSettings {
  HyperBounds bounds;
  int restarts = 5;
  NelderMeadOptions nm;
  std::uint64_t seed = 0;
  std::function<void(const std::string&)> log;  // optional

  void note(const std::string& msg) const {
    if (log) log(msg);
  }
};

namespace detail {

struct IdPartition {
  std::vector<int> untested, cheap_tested, fully_tested;
  std::vector<int> untested_pos, cheap_tested_pos, fully_tested_pos;  // positions in `ids`
};

inline IdPartition partition_ids(const ScreenState& state, const std::vector<int>& ids) {
  IdPartition p;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id < 0 || id >= state.size()) throw InputError("candidate id out of range");
    switch (state.status(id)) {
      case TestStatus::untested:
        p.untested.push_back(id);
        p.untested_pos.push_back(static_cast<int>(i));
        break;
      case TestStatus::cheap_tested:
        p.cheap_tested.push_back(id);
        p.cheap_tested_pos.push_back(static_cast<int>(i));
        break;
      case TestStatus::fully_tested:
        p.fully_tested.push_back(id);
        p.fully_tested_pos.push_back(static_cast<int>(i));
        break;
    }
  }
  return p;
}

inline Matrix rows_of(const Matrix& features, const std::vector<int>& ids) {
  Matrix out(static_cast<Eigen::Index>(ids.size()), features.cols());
  for (std::size_t i = 0; i < ids.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = features.row(ids[i]);
  return out;
}

// Deduplicated spec refit of one GP with the observation noise folded into
// the fitted noise_variance; returns (spec without noise, sigma).
inline std::pair<KernelSpec, double> refit_single_gp(const Matrix& x, const Vector& y,
                                                     const KernelSpec& spec, double sigma,
                                                     const RefitSettings& settings,
                                                     std::uint64_t stream) {
  KernelSpec init = spec;
  init.noise_variance = spec.noise_variance + sigma * sigma;
  Rng rng(derive_seed(settings.seed, stream));
  KernelSpec fitted =
      optimize_hyperparameters(x, y, init, settings.bounds, settings.restarts, rng, settings.nm);
  const double new_sigma = std::sqrt(fitted.noise_variance);
  fitted.noise_variance = 0.0;
  return {fitted, new_sigma};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Multi-fidelity model
// ---------------------------------------------------------------------------

class MultiFidelityModel {
 public:
  // Posteriors over untested candidates stay Gaussian under this model.
  static constexpr bool kGaussianUntestedMarginals = true;

  MultiFidelityModel(KernelSpec shared_spec, double sigma_cheap, double sigma_expensive)
      : shared_spec_(std::move(shared_spec)),
        sigma_cheap_(sigma_cheap),
        sigma_expensive_(sigma_expensive) {
    shared_spec_.validate();
    if (!(sigma_cheap_ > 0.0) || !(sigma_expensive_ > 0.0))
      throw InputError("MultiFidelityModel: noise levels must be positive");
  }

  const KernelSpec& shared_spec() const { return shared_spec_; }
  double sigma_cheap() const { return sigma_cheap_; }
  double sigma_expensive() const { return sigma_expensive_; }

  // Latent GP conditioned on every revealed score, with per-observation noise
  // by test type; optionally with one extra hypothetical cheap observation.
  GaussianProcess condition_latent(
      const ScreenState& state,
      std::optional<std::pair<int, double>> extra_cheap = std::nullopt) const {
    std::vector<int> obs_ids;
    std::vector<double> obs_y, obs_noise;
    const double vc = sigma_cheap_ * sigma_cheap_ + shared_spec_.noise_variance;
    const double ve = sigma_expensive_ * sigma_expensive_ + shared_spec_.noise_variance;
    for (int i = 0; i < state.size(); ++i) {
      if (state.status(i) == TestStatus::untested) continue;
      obs_ids.push_back(i);
      obs_y.push_back(state.cheap_score(i));
      obs_noise.push_back(vc);
    }
    for (int i = 0; i < state.size(); ++i) {
      if (state.status(i) != TestStatus::fully_tested) continue;
      obs_ids.push_back(i);
      obs_y.push_back(state.expensive_score(i));
      obs_noise.push_back(ve);
    }
    if (extra_cheap) {
      obs_ids.push_back(extra_cheap->first);
      obs_y.push_back(extra_cheap->second);
      obs_noise.push_back(vc);
    }
    const Matrix x = detail::rows_of(state.features(), obs_ids);
    const Vector y = Eigen::Map<const Vector>(obs_y.data(), static_cast<Eigen::Index>(obs_y.size()));
    const Vector noise =
        Eigen::Map<const Vector>(obs_noise.data(), static_cast<Eigen::Index>(obs_noise.size()));
    KernelSpec latent = shared_spec_;
    latent.noise_variance = 0.0;
    return GaussianProcess::fit(x, y, latent, noise);
  }

  // Marginals of the cheap score for untested candidates.
  GaussianMarginals predict_cheap(const ScreenState& state, const std::vector<int>& ids) const {
    for (int id : ids)
      if (state.status(id) != TestStatus::untested)
        throw InputError("predict_cheap: candidate " + std::to_string(id) +
                         " already cheap-tested");
    const GaussianProcess f = condition_latent(state);
    auto [mu, var] = f.marginals(detail::rows_of(state.features(), ids));
    var.array() += sigma_cheap_ * sigma_cheap_;
    return {ids, std::move(mu), std::move(var)};
  }

  // Gaussian marginals of the expensive score for any not-fully-tested ids.
  GaussianMarginals expensive_marginals(const ScreenState& state,
                                        const std::vector<int>& ids) const {
    const GaussianProcess f = condition_latent(state);
    return expensive_marginals_from(f, state, ids);
  }

  GaussianMarginals expensive_marginals_from(const GaussianProcess& f, const ScreenState& state,
                                             const std::vector<int>& ids) const {
    for (int id : ids)
      if (state.status(id) == TestStatus::fully_tested)
        throw InputError("expensive_marginals: candidate already expensive-tested");
    auto [mu, var] = f.marginals(detail::rows_of(state.features(), ids));
    var.array() += sigma_expensive_ * sigma_expensive_;
    return {ids, std::move(mu), std::move(var)};
  }

  // Expensive-score marginals at the listed query ids after hypothetically
  // revealing the cheap score of one untested candidate.
  GaussianMarginals expensive_marginals_given_cheap(const ScreenState& state, int cheap_id,
                                                    double cheap_value,
                                                    const std::vector<int>& query_ids) const {
    const GaussianProcess f = condition_latent(state, std::make_pair(cheap_id, cheap_value));
    auto [mu, var] = f.marginals(detail::rows_of(state.features(), query_ids));
    var.array() += sigma_expensive_ * sigma_expensive_;
    return {query_ids, std::move(mu), std::move(var)};
  }

  // m joint draws of expensive scores over ids; fully tested columns pinned.
  SampleSet joint_expensive_samples(const ScreenState& state, const std::vector<int>& ids,
                                    Eigen::Index m, Rng& rng) const {
    if (m < 0) throw InputError("joint_expensive_samples: m must be >= 0");
    SampleSet out;
    out.candidate_ids = ids;
    const auto k = static_cast<Eigen::Index>(ids.size());
    out.draws.resize(m, k);
    out.pinned.assign(ids.size(), 0);
    const auto part = detail::partition_ids(state, ids);
    for (std::size_t j = 0; j < part.fully_tested.size(); ++j) {
      out.pinned[static_cast<std::size_t>(part.fully_tested_pos[j])] = 1;
      out.draws.col(part.fully_tested_pos[j])
          .setConstant(state.expensive_score(part.fully_tested[j]));
    }
    std::vector<int> open = part.untested;
    open.insert(open.end(), part.cheap_tested.begin(), part.cheap_tested.end());
    std::vector<int> open_pos = part.untested_pos;
    open_pos.insert(open_pos.end(), part.cheap_tested_pos.begin(), part.cheap_tested_pos.end());
    if (m == 0 || open.empty()) return out;

    const GaussianProcess f = condition_latent(state);
    const Matrix samples = f.sample(detail::rows_of(state.features(), open), m, rng,
                                    sigma_expensive_ * sigma_expensive_);
    for (std::size_t j = 0; j < open.size(); ++j)
      out.draws.col(open_pos[j]) = samples.col(static_cast<Eigen::Index>(j));
    return out;
  }

  // Same per-column laws as joint_expensive_samples but columns drawn
  // independently. Cheap path for per-candidate Monte-Carlo acquisitions.
  SampleSet marginal_expensive_samples(const ScreenState& state, const std::vector<int>& ids,
                                       Eigen::Index m, Rng& rng) const {
    SampleSet out;
    out.candidate_ids = ids;
    out.draws.resize(m, static_cast<Eigen::Index>(ids.size()));
    out.pinned.assign(ids.size(), 0);
    const auto part = detail::partition_ids(state, ids);
    for (std::size_t j = 0; j < part.fully_tested.size(); ++j) {
      out.pinned[static_cast<std::size_t>(part.fully_tested_pos[j])] = 1;
      out.draws.col(part.fully_tested_pos[j])
          .setConstant(state.expensive_score(part.fully_tested[j]));
    }
    std::vector<int> open = part.untested;
    open.insert(open.end(), part.cheap_tested.begin(), part.cheap_tested.end());
    std::vector<int> open_pos = part.untested_pos;
    open_pos.insert(open_pos.end(), part.cheap_tested_pos.begin(), part.cheap_tested_pos.end());
    if (m == 0 || open.empty()) return out;
    const GaussianProcess f = condition_latent(state);
    const GaussianMarginals gm = expensive_marginals_from(f, state, open);
    const Matrix z = rng.normal_matrix(m, static_cast<Eigen::Index>(open.size()));
    for (std::size_t j = 0; j < open.size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      out.draws.col(open_pos[j]) =
          (gm.mean[jj] + std::sqrt(gm.var[jj]) * z.col(jj).array()).matrix();
    }
    return out;
  }

  // Refit hyperparameters (shared kernel plus both noise levels) by NLL on
  // all revealed observations. Too little data keeps the current model.
  MultiFidelityModel refit(const ScreenState& state, const RefitSettings& settings) const {
    const int nc = state.cheap_tested_count() + state.fully_tested_count();
    const int ne = state.fully_tested_count();
    if (nc + ne < 2) {
      settings.note("refit skipped: fewer than 2 revealed observations");
      return *this;
    }
    if (last_fit_counts_ && last_fit_counts_->first == nc && last_fit_counts_->second == ne)
      return *this;

    std::vector<int> obs_ids;
    std::vector<double> obs_y;
    std::vector<bool> is_cheap;
    for (int i = 0; i < state.size(); ++i) {
      if (state.status(i) == TestStatus::untested) continue;
      obs_ids.push_back(i);
      obs_y.push_back(state.cheap_score(i));
      is_cheap.push_back(true);
    }
    for (int i = 0; i < state.size(); ++i) {
      if (state.status(i) != TestStatus::fully_tested) continue;
      obs_ids.push_back(i);
      obs_y.push_back(state.expensive_score(i));
      is_cheap.push_back(false);
    }
    const Matrix x = detail::rows_of(state.features(), obs_ids);
    const Vector y = Eigen::Map<const Vector>(obs_y.data(), static_cast<Eigen::Index>(obs_y.size()));
    const Eigen::Index d = shared_spec_.input_dim();
    const bool fit_expensive_noise = ne >= 2;
    const Eigen::Index dim = d + 2 + (fit_expensive_noise ? 1 : 0);

    Vector lo(dim), hi(dim), start(dim);
    const auto& b = settings.bounds;
    lo[0] = std::log(b.signal_variance.lo);
    hi[0] = std::log(b.signal_variance.hi);
    start[0] = std::clamp(std::log(shared_spec_.signal_variance), lo[0], hi[0]);
    for (Eigen::Index i = 0; i < d; ++i) {
      lo[1 + i] = std::log(b.lengthscale.lo);
      hi[1 + i] = std::log(b.lengthscale.hi);
      start[1 + i] =
          std::clamp(std::log(std::min(shared_spec_.lengthscales[i], b.lengthscale.hi)),
                     lo[1 + i], hi[1 + i]);
    }
    lo[d + 1] = std::log(b.noise_variance.lo);
    hi[d + 1] = std::log(b.noise_variance.hi);
    start[d + 1] = std::clamp(std::log(sigma_cheap_ * sigma_cheap_), lo[d + 1], hi[d + 1]);
    if (fit_expensive_noise) {
      lo[d + 2] = std::log(b.noise_variance.lo);
      hi[d + 2] = std::log(b.noise_variance.hi);
      start[d + 2] =
          std::clamp(std::log(sigma_expensive_ * sigma_expensive_), lo[d + 2], hi[d + 2]);
    }

    auto unpack = [&](const Vector& v) {
      KernelSpec spec;
      spec.signal_variance = std::exp(v[0]);
      spec.lengthscales = v.segment(1, d).array().exp().matrix();
      spec.noise_variance = 0.0;
      const double vc = std::exp(v[d + 1]);
      const double ve = fit_expensive_noise ? std::exp(v[d + 2])
                                            : sigma_expensive_ * sigma_expensive_;
      return std::make_tuple(spec, vc, ve);
    };
    auto objective = [&](const Vector& v) {
      auto [spec, vc, ve] = unpack(v);
      Vector noise(x.rows());
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        noise[i] = is_cheap[static_cast<std::size_t>(i)] ? vc : ve;
      return negative_log_likelihood(x, y, spec, noise);
    };

    Rng rng(derive_seed(settings.seed, 11));
    auto [best, best_f] =
        minimize_with_restarts(objective, start, lo, hi, settings.restarts, rng, settings.nm);
    auto [spec, vc, ve] = unpack(best);
    MultiFidelityModel fitted(spec, std::sqrt(vc), std::sqrt(ve));
    fitted.last_fit_counts_ = std::make_pair(nc, ne);
    return fitted;
  }

 private:
  KernelSpec shared_spec_;
  double sigma_cheap_;
  double sigma_expensive_;
  std::optional<std::pair<int, int>> last_fit_counts_;
};

// ---------------------------------------------------------------------------
// Covariate model
// ---------------------------------------------------------------------------

class CovariateModel {
 public:
  static constexpr bool kGaussianUntestedMarginals = false;

  CovariateModel(KernelSpec f_spec, KernelSpec g_spec, double sigma_cheap,
                 double sigma_expensive)
      : f_spec_(std::move(f_spec)),
        g_spec_(std::move(g_spec)),
        sigma_cheap_(sigma_cheap),
        sigma_expensive_(sigma_expensive) {
    f_spec_.validate();
    g_spec_.validate();
    if (g_spec_.input_dim() != f_spec_.input_dim() + 1)
      throw InputError("CovariateModel: g must take (x, y_cheap), one extra input dimension");
    if (!(sigma_cheap_ > 0.0) || !(sigma_expensive_ > 0.0))
      throw InputError("CovariateModel: noise levels must be positive");
  }

  const KernelSpec& f_spec() const { return f_spec_; }
  const KernelSpec& g_spec() const { return g_spec_; }
  double sigma_cheap() const { return sigma_cheap_; }
  double sigma_expensive() const { return sigma_expensive_; }

  // f conditioned on every revealed cheap score.
  GaussianProcess condition_f(const ScreenState& state) const {
    std::vector<int> ids;
    std::vector<double> ys;
    for (int i = 0; i < state.size(); ++i) {
      if (state.status(i) == TestStatus::untested) continue;
      ids.push_back(i);
      ys.push_back(state.cheap_score(i));
    }
    KernelSpec latent = f_spec_;
    latent.noise_variance = 0.0;
    const double vc = sigma_cheap_ * sigma_cheap_ + f_spec_.noise_variance;
    return GaussianProcess::fit(
        detail::rows_of(state.features(), ids),
        Eigen::Map<const Vector>(ys.data(), static_cast<Eigen::Index>(ys.size())), latent,
        Vector::Constant(static_cast<Eigen::Index>(ids.size()), vc));
  }

  // g conditioned on the fully tested candidates; the prior when there are
  // none yet.
  GaussianProcess condition_g(const ScreenState& state) const {
    std::vector<int> ids = state.fully_tested_ids();
    Matrix z(static_cast<Eigen::Index>(ids.size()), g_spec_.input_dim());
    Vector y(static_cast<Eigen::Index>(ids.size()));
    for (std::size_t j = 0; j < ids.size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      z.row(jj) = augmented_input(state, ids[j], state.cheap_score(ids[j]));
      y[jj] = state.expensive_score(ids[j]);
    }
    KernelSpec latent = g_spec_;
    latent.noise_variance = 0.0;
    const double ve = sigma_expensive_ * sigma_expensive_ + g_spec_.noise_variance;
    return GaussianProcess::fit(z, y, latent,
                                Vector::Constant(static_cast<Eigen::Index>(ids.size()), ve));
  }

  // Marginals of the cheap score for untested candidates.
  GaussianMarginals predict_cheap(const ScreenState& state, const std::vector<int>& ids) const {
    for (int id : ids)
      if (state.status(id) != TestStatus::untested)
        throw InputError("predict_cheap: candidate " + std::to_string(id) +
                         " already cheap-tested");
    const GaussianProcess f = condition_f(state);
    auto [mu, var] = f.marginals(detail::rows_of(state.features(), ids));
    var.array() += sigma_cheap_ * sigma_cheap_;
    return {ids, std::move(mu), std::move(var)};
  }

  // Gaussian expensive-score marginals exist only for cheap-tested ids, whose
  // augmented input (x, y_cheap) is known.
  GaussianMarginals expensive_marginals(const ScreenState& state,
                                        const std::vector<int>& ids) const {
    return expensive_marginals_from(condition_g(state), state, ids);
  }

  GaussianMarginals expensive_marginals_from(const GaussianProcess& g, const ScreenState& state,
                                             const std::vector<int>& ids) const {
    Matrix z(static_cast<Eigen::Index>(ids.size()), g_spec_.input_dim());
    for (std::size_t j = 0; j < ids.size(); ++j) {
      if (state.status(ids[j]) != TestStatus::cheap_tested)
        throw InputError(
            "expensive_marginals: covariate-model marginals are Gaussian only for "
            "cheap-tested candidates");
      z.row(static_cast<Eigen::Index>(j)) =
          augmented_input(state, ids[j], state.cheap_score(ids[j]));
    }
    auto [mu, var] = g.marginals(z);
    var.array() += sigma_expensive_ * sigma_expensive_;
    return {ids, std::move(mu), std::move(var)};
  }

  // Expensive-score marginals after hypothetically revealing one cheap score.
  // Query ids must be cheap-tested in the augmented state (i.e. already
  // cheap-tested, or the hypothetical candidate itself).
  GaussianMarginals expensive_marginals_given_cheap(const ScreenState& state, int cheap_id,
                                                    double cheap_value,
                                                    const std::vector<int>& query_ids) const {
    if (state.status(cheap_id) != TestStatus::untested)
      throw InputError("expensive_marginals_given_cheap: candidate already cheap-tested");
    const GaussianProcess g = condition_g(state);
    Matrix z(static_cast<Eigen::Index>(query_ids.size()), g_spec_.input_dim());
    for (std::size_t j = 0; j < query_ids.size(); ++j) {
      const int id = query_ids[j];
      double yc;
      if (id == cheap_id)
        yc = cheap_value;
      else if (state.status(id) == TestStatus::cheap_tested)
        yc = state.cheap_score(id);
      else
        throw InputError("expensive_marginals_given_cheap: query id has no cheap score");
      z.row(static_cast<Eigen::Index>(j)) = augmented_input(state, id, yc);
    }
    auto [mu, var] = g.marginals(z);
    var.array() += sigma_expensive_ * sigma_expensive_;
    return {query_ids, std::move(mu), std::move(var)};
  }

  // m joint draws over ids. Untested candidates get a jointly drawn cheap
  // score per draw; all open candidates then get one joint g draw at the
  // draw's augmented inputs. Fully tested columns are pinned.
  SampleSet joint_expensive_samples(const ScreenState& state, const std::vector<int>& ids,
                                    Eigen::Index m, Rng& rng) const {
    if (m < 0) throw InputError("joint_expensive_samples: m must be >= 0");
    SampleSet out;
    out.candidate_ids = ids;
    out.draws.resize(m, static_cast<Eigen::Index>(ids.size()));
    out.pinned.assign(ids.size(), 0);
    const auto part = detail::partition_ids(state, ids);
    for (std::size_t j = 0; j < part.fully_tested.size(); ++j) {
      out.pinned[static_cast<std::size_t>(part.fully_tested_pos[j])] = 1;
      out.draws.col(part.fully_tested_pos[j])
          .setConstant(state.expensive_score(part.fully_tested[j]));
    }
    const auto k_uu = static_cast<Eigen::Index>(part.untested.size());
    const auto k_tu = static_cast<Eigen::Index>(part.cheap_tested.size());
    const Eigen::Index k_open = k_uu + k_tu;
    if (m == 0 || k_open == 0) return out;

    const GaussianProcess f = condition_f(state);
    const GaussianProcess g = condition_g(state);
    const double ve = sigma_expensive_ * sigma_expensive_;

    // Joint cheap-score draws for the untested block.
    Matrix cheap_draws(m, k_uu);
    if (k_uu > 0)
      cheap_draws = f.sample(detail::rows_of(state.features(), part.untested), m, rng,
                             sigma_cheap_ * sigma_cheap_);

    const Eigen::Index zdim = g_spec_.input_dim();
    Matrix zq(k_open, zdim);
    for (Eigen::Index j = 0; j < k_tu; ++j)
      zq.row(k_uu + j) = augmented_input(state, part.cheap_tested[static_cast<std::size_t>(j)],
                                         state.cheap_score(part.cheap_tested[static_cast<std::size_t>(j)]));
    for (Eigen::Index j = 0; j < k_uu; ++j)
      zq.row(j).head(zdim - 1) =
          state.features().row(part.untested[static_cast<std::size_t>(j)]);

    for (Eigen::Index s = 0; s < m; ++s) {
      for (Eigen::Index j = 0; j < k_uu; ++j) zq(j, zdim - 1) = cheap_draws(s, j);
      auto [mu, cov] = g.joint(zq);
      cov.diagonal().array() += ve;
      const Matrix factor = detail::sampling_factor(cov);
      const Vector y = mu + factor * rng.normal_vector(k_open);
      for (Eigen::Index j = 0; j < k_uu; ++j)
        out.draws(s, part.untested_pos[static_cast<std::size_t>(j)]) = y[j];
      for (Eigen::Index j = 0; j < k_tu; ++j)
        out.draws(s, part.cheap_tested_pos[static_cast<std::size_t>(j)]) = y[k_uu + j];
    }
    return out;
  }

  // Column-independent draws with the same per-column marginal law as
  // joint_expensive_samples. Cheap scores are drawn from the f-posterior
  // marginals and g is queried in one batch over all draw-augmented inputs.
  SampleSet marginal_expensive_samples(const ScreenState& state, const std::vector<int>& ids,
                                       Eigen::Index m, Rng& rng) const {
    if (m < 0) throw InputError("marginal_expensive_samples: m must be >= 0");
    SampleSet out;
    out.candidate_ids = ids;
    out.draws.resize(m, static_cast<Eigen::Index>(ids.size()));
    out.pinned.assign(ids.size(), 0);
    const auto part = detail::partition_ids(state, ids);
    for (std::size_t j = 0; j < part.fully_tested.size(); ++j) {
      out.pinned[static_cast<std::size_t>(part.fully_tested_pos[j])] = 1;
      out.draws.col(part.fully_tested_pos[j])
          .setConstant(state.expensive_score(part.fully_tested[j]));
    }
    const auto k_uu = static_cast<Eigen::Index>(part.untested.size());
    const auto k_tu = static_cast<Eigen::Index>(part.cheap_tested.size());
    if (m == 0 || k_uu + k_tu == 0) return out;

    const GaussianProcess g = condition_g(state);
    const double ve = sigma_expensive_ * sigma_expensive_;
    const Eigen::Index zdim = g_spec_.input_dim();

    if (k_uu > 0) {
      const GaussianProcess f = condition_f(state);
      auto [mu_f, var_f] = f.marginals(detail::rows_of(state.features(), part.untested));
      var_f.array() += sigma_cheap_ * sigma_cheap_;
      const Vector sd_f = var_f.cwiseSqrt();
      const Matrix z1 = rng.normal_matrix(m, k_uu);
      const Matrix z2 = rng.normal_matrix(m, k_uu);

      // Query g in draw blocks so the flattened point list stays small.
      const Eigen::Index block = std::max<Eigen::Index>(1, 131072 / k_uu);
      Matrix zq(std::min(block, m) * k_uu, zdim);
      for (Eigen::Index s0 = 0; s0 < m; s0 += block) {
        const Eigen::Index nb = std::min(block, m - s0);
        for (Eigen::Index s = 0; s < nb; ++s)
          for (Eigen::Index j = 0; j < k_uu; ++j) {
            zq.row(s * k_uu + j).head(zdim - 1) =
                state.features().row(part.untested[static_cast<std::size_t>(j)]);
            zq(s * k_uu + j, zdim - 1) = mu_f[j] + sd_f[j] * z1(s0 + s, j);
          }
        auto [mu_g, var_g] = g.marginals(zq.topRows(nb * k_uu));
        for (Eigen::Index s = 0; s < nb; ++s)
          for (Eigen::Index j = 0; j < k_uu; ++j) {
            const Eigen::Index row = s * k_uu + j;
            out.draws(s0 + s, part.untested_pos[static_cast<std::size_t>(j)]) =
                mu_g[row] + std::sqrt(var_g[row] + ve) * z2(s0 + s, j);
          }
      }
    }
    if (k_tu > 0) {
      const GaussianMarginals gm = expensive_marginals_from(g, state, part.cheap_tested);
      const Matrix z = rng.normal_matrix(m, k_tu);
      for (Eigen::Index j = 0; j < k_tu; ++j)
        out.draws.col(part.cheap_tested_pos[static_cast<std::size_t>(j)]) =
            (gm.mean[j] + std::sqrt(gm.var[j]) * z.col(j).array()).matrix();
    }
    return out;
  }

  // Refit f on all (x, y_cheap) pairs and g on the fully tested triples,
  // folding each noise level into the fitted GP's noise term. Either GP with
  // fewer than two observations keeps its current spec.
  CovariateModel refit(const ScreenState& state, const RefitSettings& settings) const {
    const int nc = state.cheap_tested_count() + state.fully_tested_count();
    const int ne = state.fully_tested_count();
    if (last_fit_counts_ && last_fit_counts_->first == nc && last_fit_counts_->second == ne)
      return *this;

    CovariateModel fitted = *this;
    if (nc >= 2) {
      std::vector<int> ids;
      std::vector<double> ys;
      for (int i = 0; i < state.size(); ++i) {
        if (state.status(i) == TestStatus::untested) continue;
        ids.push_back(i);
        ys.push_back(state.cheap_score(i));
      }
      auto [spec, sigma] = detail::refit_single_gp(
          detail::rows_of(state.features(), ids),
          Eigen::Map<const Vector>(ys.data(), static_cast<Eigen::Index>(ys.size())), f_spec_,
          sigma_cheap_, settings, 21);
      fitted.f_spec_ = spec;
      fitted.sigma_cheap_ = sigma;
    } else {
      settings.note("refit skipped for f: fewer than 2 cheap observations");
    }
    if (ne >= 2) {
      std::vector<int> ids = state.fully_tested_ids();
      Matrix z(static_cast<Eigen::Index>(ids.size()), g_spec_.input_dim());
      Vector y(static_cast<Eigen::Index>(ids.size()));
      for (std::size_t j = 0; j < ids.size(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        z.row(jj) = augmented_input(state, ids[j], state.cheap_score(ids[j]));
        y[jj] = state.expensive_score(ids[j]);
      }
      auto [spec, sigma] =
          detail::refit_single_gp(z, y, g_spec_, sigma_expensive_, settings, 22);
      fitted.g_spec_ = spec;
      fitted.sigma_expensive_ = sigma;
    } else {
      settings.note("refit skipped for g: fewer than 2 expensive observations");
    }
    fitted.last_fit_counts_ = std::make_pair(nc, ne);
    return fitted;
  }

 private:
  Eigen::RowVectorXd augmented_input(const ScreenState& state, int id, double cheap_value) const {
    Eigen::RowVectorXd z(g_spec_.input_dim());
    z.head(g_spec_.input_dim() - 1) = state.features().row(id);
    z[g_spec_.input_dim() - 1] = cheap_value;
    return z;
  }

  KernelSpec f_spec_;
  KernelSpec g_spec_;
  double sigma_cheap_;
  double sigma_expensive_;
  std::optional<std::pair<int, int>> last_fit_counts_;
};

}  // namespace screenbo
