#pragma once

// Synthetic screening family: 1-d candidates on [0,1], cheap scores drawn
// from an RBF GP over x, expensive scores drawn from an RBF GP over the
// augmented input (x, y_cheap) whose two lengthscales are set by a mixing
// angle theta. At theta = 0 the expensive score depends only on the cheap
// score; at theta = pi/2 only on x, so the cheap test is pure overhead.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "screenbo/dataset.hpp"
#include "screenbo/gp.hpp"
#include "screenbo/kernel.hpp"
#include "screenbo/models.hpp"
#include "screenbo/rng.hpp"

namespace screenbo {

struct SynthConfig {
  int n = 500;
  double theta = M_PI / 4.0;
  std::uint64_t seed = 0;

  // Generative constants: kernel amplitudes, the shared lengthscale, and the
  // two noise levels.
  double cheap_signal_variance = 0.25 * 0.25;
  double expensive_signal_variance = 1.0;
  double lengthscale = 0.25;
  double sigma_cheap = 0.25;
  double sigma_expensive = 0.05;

  void validate() const {
    if (n < 2) throw InputError("SynthConfig: n must be >= 2");
    if (!(theta >= 0.0) || !(theta <= M_PI / 2.0 + 1e-12))
      throw InputError("SynthConfig: theta must lie in [0, pi/2]");
  }
};

namespace detail {

// Mixing-angle lengthscales of the expensive kernel over (x, y_cheap):
// scaling the squared distance by sin^2/cos^2 is the same as dividing the
// lengthscale by sin/cos, with a zero factor giving an infinite lengthscale.
inline double mixed_lengthscale(double base, double factor) {
  if (factor <= 0.0) return std::numeric_limits<double>::infinity();
  return base / factor;
}

}  // namespace detail

// The exact generative model, for running screens with full knowledge of the
// hyperparameters.
inline CovariateModel synth_true_model(const SynthConfig& config) {
  config.validate();
  KernelSpec f_spec = KernelSpec::isotropic(config.cheap_signal_variance, config.lengthscale, 1);
  KernelSpec g_spec;
  g_spec.signal_variance = config.expensive_signal_variance;
  g_spec.lengthscales.resize(2);
  g_spec.lengthscales[0] = detail::mixed_lengthscale(config.lengthscale, std::sin(config.theta));
  g_spec.lengthscales[1] = detail::mixed_lengthscale(config.lengthscale, std::cos(config.theta));
  g_spec.noise_variance = 0.0;
  return CovariateModel(f_spec, g_spec, config.sigma_cheap, config.sigma_expensive);
}

// Covariance of the cheap scores at the given locations.
inline Matrix synth_cheap_covariance(const SynthConfig& config, const Matrix& x) {
  KernelSpec spec = KernelSpec::isotropic(config.cheap_signal_variance, config.lengthscale, 1,
                                          config.sigma_cheap * config.sigma_cheap);
  return kernel_self(x, spec, true);
}

// Covariance of the expensive scores given the realized cheap scores.
inline Matrix synth_expensive_covariance(const SynthConfig& config, const Matrix& x,
                                         const Vector& cheap) {
  KernelSpec spec;
  spec.signal_variance = config.expensive_signal_variance;
  spec.lengthscales.resize(2);
  spec.lengthscales[0] = detail::mixed_lengthscale(config.lengthscale, std::sin(config.theta));
  spec.lengthscales[1] = detail::mixed_lengthscale(config.lengthscale, std::cos(config.theta));
  spec.noise_variance = config.sigma_expensive * config.sigma_expensive;
  Matrix z(x.rows(), 2);
  z.col(0) = x.col(0);
  z.col(1) = cheap;
  return kernel_self(z, spec, true);
}

// Draw one screening problem. Deterministic given the seed.
inline Dataset generate_problem(const SynthConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, 0));
  const Eigen::Index n = config.n;

  Matrix x(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) x(i, 0) = rng.uniform();

  const Matrix cov_cheap = synth_cheap_covariance(config, x);
  const Matrix l_cheap = detail::robust_cholesky(cov_cheap);
  const Vector cheap = l_cheap * rng.normal_vector(n);

  const Matrix cov_expensive = synth_expensive_covariance(config, x, cheap);
  const Matrix l_expensive = detail::robust_cholesky(cov_expensive);
  const Vector expensive = l_expensive * rng.normal_vector(n);

  Dataset out;
  out.features = x;
  out.cheap_scores = cheap;
  out.expensive_scores = expensive;
  out.ids.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) out.ids.push_back(std::to_string(i));
  return out;
}

}  // namespace screenbo
