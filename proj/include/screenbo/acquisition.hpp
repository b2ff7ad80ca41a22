#pragma once

// Per-candidate desirability scores for the two-test screen: expected
// improvement, top-N membership probability, threshold exceedance and
// Thompson draws, each computable from closed-form Gaussian marginals or
// from a SampleSet of joint posterior draws.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "screenbo/models.hpp"
#include "screenbo/stats.hpp"

namespace screenbo {

struct AcquisitionValues {
  std::vector<int> ids;
  Vector values;

  // Candidate with the largest value; ties broken by lower candidate id.
  int argmax() const {
    if (ids.empty()) throw InputError("AcquisitionValues::argmax: empty");
    int best = 0;
    for (std::size_t i = 1; i < ids.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const auto bb = static_cast<Eigen::Index>(best);
      if (values[ii] > values[bb] || (values[ii] == values[bb] && ids[i] < ids[best]))
        best = static_cast<int>(i);
    }
    return ids[static_cast<std::size_t>(best)];
  }

  double value_of(int id) const {
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (ids[i] == id) return values[static_cast<Eigen::Index>(i)];
    throw InputError("AcquisitionValues: id not present");
  }
};

// Threshold for the exceedance acquisition: the posterior median of the Nth
// highest expensive score. Cheap to estimate and refreshed only every few
// expensive tests.
struct ThresholdEstimate {
  double tau = 0.0;
  int n_top = 1;
  int sample_count = 0;
  int age = 0;  // expensive tests since estimation
};

inline double expected_improvement_value(double mean, double var, double y_max) {
  if (var < 0.0) throw InputError("expected_improvement: negative variance");
  const double sd = std::sqrt(var);
  if (sd == 0.0) return std::max(mean - y_max, 0.0);
  const double z = (mean - y_max) / sd;
  const double ei = sd * normal_pdf(z) + (mean - y_max) * normal_cdf(z);
  return std::max(ei, 0.0);
}

inline double threshold_probability_value(double mean, double var, double tau) {
  if (var < 0.0) throw InputError("threshold_probability: negative variance");
  const double sd = std::sqrt(var);
  if (sd == 0.0) return mean >= tau ? 1.0 : 0.0;
  return 1.0 - normal_cdf((tau - mean) / sd);
}

// E[max(y - y_max, 0)] from closed-form Gaussian marginals.
inline AcquisitionValues greedy_expected_improvement(const GaussianMarginals& marginals,
                                                     double y_max) {
  if (!std::isfinite(y_max)) throw InputError("greedy_expected_improvement: y_max not finite");
  Vector v(marginals.mean.size());
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v[i] = expected_improvement_value(marginals.mean[i], marginals.var[i], y_max);
  return {marginals.ids, std::move(v)};
}

// Monte-Carlo estimate: mean positive part per column.
inline AcquisitionValues greedy_expected_improvement(const SampleSet& samples, double y_max) {
  if (!std::isfinite(y_max)) throw InputError("greedy_expected_improvement: y_max not finite");
  if (samples.draw_count() < 1)
    throw InputError("greedy_expected_improvement: empty SampleSet");
  Vector v = (samples.draws.array() - y_max)
                 .max(0.0)
                 .colwise()
                 .mean()
                 .transpose();
  return {samples.candidate_ids, std::move(v)};
}

// P[y_i >= tau] from Gaussian marginals.
inline AcquisitionValues greedy_threshold(const GaussianMarginals& marginals, double tau) {
  Vector v(marginals.mean.size());
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v[i] = threshold_probability_value(marginals.mean[i], marginals.var[i], tau);
  return {marginals.ids, std::move(v)};
}

// Exceedance fraction per column.
inline AcquisitionValues greedy_threshold(const SampleSet& samples, double tau) {
  if (samples.draw_count() < 1) throw InputError("greedy_threshold: empty SampleSet");
  Vector v = (samples.draws.array() >= tau)
                 .cast<double>()
                 .colwise()
                 .mean()
                 .transpose();
  return {samples.candidate_ids, std::move(v)};
}

namespace detail {

// Top-N positions of one draw under the (value desc, index asc) order.
inline void top_n_positions(const Vector& row, int n_top, std::vector<int>& scratch,
                            std::vector<int>& out) {
  const auto k = static_cast<int>(row.size());
  scratch.resize(static_cast<std::size_t>(k));
  std::iota(scratch.begin(), scratch.end(), 0);
  auto better = [&](int a, int b) { return row[a] > row[b] || (row[a] == row[b] && a < b); };
  std::nth_element(scratch.begin(), scratch.begin() + (n_top - 1), scratch.end(), better);
  out.assign(scratch.begin(), scratch.begin() + n_top);
}

}  // namespace detail

// P[i in top-N] estimated over joint draws. The SampleSet must cover every
// candidate under consideration, with already-tested scores pinned; values
// are returned for the acquirable (not fully tested) candidates.
inline AcquisitionValues greedy_mining(const SampleSet& samples, int n_top) {
  const auto k = samples.candidate_count();
  const auto m = samples.draw_count();
  if (n_top < 1 || n_top > k) throw InputError("greedy_mining: N out of range");
  if (m < 1) throw InputError("greedy_mining: empty SampleSet");
  Vector hits = Vector::Zero(k);
  std::vector<int> scratch, top;
  for (Eigen::Index s = 0; s < m; ++s) {
    const Vector row = samples.draws.row(s).transpose();
    detail::top_n_positions(row, n_top, scratch, top);
    for (int pos : top) hits[pos] += 1.0;
  }
  hits /= static_cast<double>(m);
  AcquisitionValues out;
  for (Eigen::Index j = 0; j < k; ++j) {
    if (samples.pinned[static_cast<std::size_t>(j)]) continue;
    out.ids.push_back(samples.candidate_ids[static_cast<std::size_t>(j)]);
  }
  out.values.resize(static_cast<Eigen::Index>(out.ids.size()));
  Eigen::Index w = 0;
  for (Eigen::Index j = 0; j < k; ++j)
    if (!samples.pinned[static_cast<std::size_t>(j)]) out.values[w++] = hits[j];
  return out;
}

// Median over draws of the Nth highest score per draw.
inline ThresholdEstimate estimate_threshold(const SampleSet& samples, int n_top) {
  const auto k = samples.candidate_count();
  const auto m = samples.draw_count();
  if (n_top < 1 || n_top > k) throw InputError("estimate_threshold: N out of range");
  if (m < 1) throw InputError("estimate_threshold: needs at least one draw");
  std::vector<double> nth(static_cast<std::size_t>(m));
  std::vector<double> row(static_cast<std::size_t>(k));
  for (Eigen::Index s = 0; s < m; ++s) {
    for (Eigen::Index j = 0; j < k; ++j) row[static_cast<std::size_t>(j)] = samples.draws(s, j);
    std::nth_element(row.begin(), row.begin() + (n_top - 1), row.end(), std::greater<>());
    nth[static_cast<std::size_t>(s)] = row[static_cast<std::size_t>(n_top - 1)];
  }
  ThresholdEstimate est;
  est.tau = median_of(std::move(nth));
  est.n_top = n_top;
  est.sample_count = static_cast<int>(m);
  est.age = 0;
  return est;
}

// One joint posterior draw used directly as the acquisition.
inline AcquisitionValues thompson(const SampleSet& samples) {
  if (samples.draw_count() != 1)
    throw InputError("thompson: expected exactly one joint draw");
  return {samples.candidate_ids, samples.draws.row(0).transpose()};
}

}  // namespace screenbo
