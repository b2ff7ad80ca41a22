#pragma once

// Derivative-free hyperparameter fitting: Nelder-Mead on the negative log
// marginal likelihood in log-parameter space, with box bounds enforced by
// projection and a configurable number of random restarts.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "screenbo/gp.hpp"
#include "screenbo/kernel.hpp"
#include "screenbo/rng.hpp"

namespace screenbo {

struct Interval {
  double lo;
  double hi;
};

struct HyperBounds {
  Interval signal_variance{1e-6, 1e4};
  Interval lengthscale{1e-3, 1e4};
  Interval noise_variance{1e-8, 1e2};

  void validate() const {
    if (!(signal_variance.lo > 0.0) || !(lengthscale.lo > 0.0) ||
        !(noise_variance.lo > 0.0))
      throw InputError("HyperBounds: lower limits must be positive");
    if (signal_variance.hi < signal_variance.lo || lengthscale.hi < lengthscale.lo ||
        noise_variance.hi < noise_variance.lo)
      throw InputError("HyperBounds: empty interval");
  }
};

struct NelderMeadOptions {
  int max_iterations = 400;
  double f_tolerance = 1e-9;
  double x_tolerance = 1e-10;
  double initial_step = 0.5;  // in log-parameter units
};

namespace detail {

// Standard Nelder-Mead on a box; points are projected into [lo, hi].
// Returns the best vertex found. Objective evaluations that throw are
// treated as +inf.
inline std::pair<Vector, double> nelder_mead(
    const std::function<double(const Vector&)>& objective, Vector x0, const Vector& lo,
    const Vector& hi, const NelderMeadOptions& opts) {
  const Eigen::Index dim = x0.size();
  auto project = [&](Vector v) {
    for (Eigen::Index i = 0; i < dim; ++i) v[i] = std::clamp(v[i], lo[i], hi[i]);
    return v;
  };
  auto safe_eval = [&](const Vector& v) {
    try {
      const double f = objective(v);
      return std::isfinite(f) ? f : std::numeric_limits<double>::infinity();
    } catch (...) {
      return std::numeric_limits<double>::infinity();
    }
  };

  std::vector<Vector> xs(dim + 1);
  std::vector<double> fs(dim + 1);
  xs[0] = project(std::move(x0));
  fs[0] = safe_eval(xs[0]);
  for (Eigen::Index i = 0; i < dim; ++i) {
    Vector v = xs[0];
    v[i] += opts.initial_step;
    if (v[i] > hi[i]) v[i] = xs[0][i] - opts.initial_step;
    xs[i + 1] = project(std::move(v));
    fs[i + 1] = safe_eval(xs[i + 1]);
  }

  std::vector<int> order(dim + 1);
  for (int it = 0; it < opts.max_iterations; ++it) {
    for (int i = 0; i <= dim; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) { return fs[a] < fs[b]; });
    const int best = order[0], worst = order[dim], second = order[dim - 1];

    double spread = 0.0, size = 0.0;
    for (int i = 1; i <= dim; ++i) {
      spread = std::max(spread, std::abs(fs[order[i]] - fs[best]));
      size = std::max(size, (xs[order[i]] - xs[best]).lpNorm<Eigen::Infinity>());
    }
    if (spread < opts.f_tolerance && size < opts.x_tolerance) break;

    Vector centroid = Vector::Zero(dim);
    for (int i = 0; i <= dim; ++i)
      if (i != worst) centroid += xs[i];
    centroid /= static_cast<double>(dim);

    const Vector reflected = project(centroid + (centroid - xs[worst]));
    const double fr = safe_eval(reflected);
    if (fr < fs[best]) {
      const Vector expanded = project(centroid + 2.0 * (centroid - xs[worst]));
      const double fe = safe_eval(expanded);
      if (fe < fr) {
        xs[worst] = expanded;
        fs[worst] = fe;
      } else {
        xs[worst] = reflected;
        fs[worst] = fr;
      }
      continue;
    }
    if (fr < fs[second]) {
      xs[worst] = reflected;
      fs[worst] = fr;
      continue;
    }
    const Vector contracted = project(centroid + 0.5 * (xs[worst] - centroid));
    const double fc = safe_eval(contracted);
    if (fc < fs[worst]) {
      xs[worst] = contracted;
      fs[worst] = fc;
      continue;
    }
    for (int i = 0; i <= dim; ++i) {  // shrink toward the best vertex
      if (i == best) continue;
      xs[i] = project(xs[best] + 0.5 * (xs[i] - xs[best]));
      fs[i] = safe_eval(xs[i]);
    }
  }

  int best = 0;
  for (int i = 1; i <= dim; ++i)
    if (fs[i] < fs[best]) best = i;
  return {xs[best], fs[best]};
}

}  // namespace detail

// Generic bounded Nelder-Mead with restarts; start points after the first are
// sampled uniformly in the box. Returns the best point and value.
inline std::pair<Vector, double> minimize_with_restarts(
    const std::function<double(const Vector&)>& objective, const Vector& x0,
    const Vector& lo, const Vector& hi, int restarts, Rng& rng,
    const NelderMeadOptions& opts = {}) {
  Vector best_x = x0;
  double best_f = std::numeric_limits<double>::infinity();
  bool any = false;
  for (int r = 0; r < std::max(restarts, 1); ++r) {
    Vector start(x0.size());
    if (r == 0) {
      start = x0;
    } else {
      for (Eigen::Index i = 0; i < x0.size(); ++i) start[i] = rng.uniform(lo[i], hi[i]);
    }
    auto [x, f] = detail::nelder_mead(objective, start, lo, hi, opts);
    if (std::isfinite(f) && (!any || f < best_f)) {
      best_x = x;
      best_f = f;
      any = true;
    }
  }
  if (!any) throw NumericalError("minimize_with_restarts: every start failed to evaluate");
  return {best_x, best_f};
}

// Fit (signal_variance, lengthscales, noise_variance) by NLL minimization in
// log space. The returned spec never has a worse NLL than the clamped init and
// always lies inside the bounds.
inline KernelSpec optimize_hyperparameters(const Matrix& x, const Vector& y,
                                           const KernelSpec& init, const HyperBounds& bounds,
                                           int restarts, Rng& rng,
                                           const NelderMeadOptions& opts = {}) {
  bounds.validate();
  const Eigen::Index d = init.input_dim();
  const Eigen::Index dim = d + 2;  // sv, lengthscales..., noise

  Vector lo(dim), hi(dim), start(dim);
  lo[0] = std::log(bounds.signal_variance.lo);
  hi[0] = std::log(bounds.signal_variance.hi);
  for (Eigen::Index i = 0; i < d; ++i) {
    lo[1 + i] = std::log(bounds.lengthscale.lo);
    hi[1 + i] = std::log(bounds.lengthscale.hi);
  }
  lo[dim - 1] = std::log(bounds.noise_variance.lo);
  hi[dim - 1] = std::log(bounds.noise_variance.hi);

  auto unpack = [d](const Vector& v) {
    KernelSpec s;
    s.signal_variance = std::exp(v[0]);
    s.lengthscales = v.segment(1, d).array().exp().matrix();
    s.noise_variance = std::exp(v[d + 1]);
    return s;
  };

  start[0] = std::clamp(std::log(init.signal_variance), lo[0], hi[0]);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double l = std::min(init.lengthscales[i], bounds.lengthscale.hi);
    start[1 + i] = std::clamp(std::log(l), lo[1 + i], hi[1 + i]);
  }
  start[dim - 1] =
      std::clamp(std::log(std::max(init.noise_variance, bounds.noise_variance.lo)),
                 lo[dim - 1], hi[dim - 1]);

  auto objective = [&](const Vector& v) { return negative_log_likelihood(x, y, unpack(v)); };

  auto [best, best_f] = minimize_with_restarts(objective, start, lo, hi, restarts, rng, opts);

  // Never return something worse than the clamped starting point.
  try {
    if (objective(start) < best_f) best = start;
  } catch (...) {
  }
  return unpack(best);
}

}  // namespace screenbo
