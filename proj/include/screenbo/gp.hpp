#pragma once

// Exact Gaussian-process regression: conditioning on observations via
// Cholesky factorization, predictive moments, joint sampling and the
// marginal likelihood. Predictions are for the latent function; callers add
// observation noise where the model calls for it.

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <utility>

#include "screenbo/errors.hpp"
#include "screenbo/kernel.hpp"
#include "screenbo/rng.hpp"

namespace screenbo {

namespace detail {

// Cholesky with an escalating diagonal jitter ladder 1e-10 .. 1e-6.
inline Matrix robust_cholesky(Matrix k) {
  const Eigen::Index n = k.rows();
  {
    Eigen::LLT<Matrix> llt(k);
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  for (double jitter = 1e-10; jitter <= 1.001e-6; jitter *= 10.0) {
    Matrix kj = k + jitter * Matrix::Identity(n, n);
    Eigen::LLT<Matrix> llt(kj);
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  throw NumericalError("robust_cholesky: matrix not positive definite after jitter");
}

// Factor F with F F^T = clamp(cov) for sampling; falls back to an
// eigendecomposition with negative eigenvalues clamped to zero, so exactly
// singular covariances (pinned or noiseless points) factor without adding
// spurious jitter noise.
inline Matrix sampling_factor(const Matrix& cov) {
  const Eigen::Index n = cov.rows();
  if (n == 0) return Matrix(0, 0);
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  Vector ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal();
}

}  // namespace detail

class GaussianProcess {
 public:
  // Prior (no observations).
  explicit GaussianProcess(KernelSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
  }

  // Condition on observations with homoscedastic noise spec.noise_variance.
  static GaussianProcess fit(const Matrix& x, const Vector& y, const KernelSpec& spec) {
    return fit(x, y, spec, Vector::Constant(x.rows(), spec.noise_variance));
  }

  // Condition with per-observation noise variances (heteroscedastic).
  static GaussianProcess fit(const Matrix& x, const Vector& y, const KernelSpec& spec,
                             const Vector& observation_noise) {
    spec.validate();
    if (x.rows() != y.size())
      throw InputError("GaussianProcess::fit: rows(X) != len(y)");
    if (observation_noise.size() != x.rows())
      throw InputError("GaussianProcess::fit: noise vector length mismatch");
    GaussianProcess gp(spec);
    if (x.rows() == 0) return gp;
    detail::check_dim(x, spec, "GaussianProcess::fit");
    gp.x_ = x;
    gp.y_ = y;
    gp.noise_ = observation_noise;
    Matrix k = kernel_self(x, spec, false);
    k.diagonal() += observation_noise;
    gp.chol_ = detail::robust_cholesky(std::move(k));
    gp.alpha_ = gp.chol_.triangularView<Eigen::Lower>().solve(y);
    gp.chol_.triangularView<Eigen::Lower>().transpose().solveInPlace(gp.alpha_);
    return gp;
  }

  // Same posterior plus one extra observation. Used for hypothetical-data
  // lookahead in the greedy controller.
  GaussianProcess with_observation(const Vector& x_new, double y_new,
                                   double noise_new) const {
    Matrix x(train_size() + 1, spec_.input_dim());
    Vector y(train_size() + 1);
    Vector noise(train_size() + 1);
    if (train_size() > 0) {
      x.topRows(train_size()) = x_;
      y.head(train_size()) = y_;
      noise.head(train_size()) = noise_;
    }
    x.row(train_size()) = x_new.transpose();
    y[train_size()] = y_new;
    noise[train_size()] = noise_new;
    return fit(x, y, spec_, noise);
  }

  Eigen::Index train_size() const { return x_.rows(); }
  const KernelSpec& spec() const { return spec_; }
  const Matrix& train_inputs() const { return x_; }
  const Vector& train_targets() const { return y_; }
  const Matrix& chol_factor() const { return chol_; }
  const Vector& alpha() const { return alpha_; }

  // Predictive mean of the latent function at query points.
  Vector mean(const Matrix& xq) const {
    detail::check_dim(xq, spec_, "GaussianProcess::mean");
    if (train_size() == 0) return Vector::Zero(xq.rows());
    return kernel_cross(xq, x_, spec_) * alpha_;
  }

  // Predictive mean and (clamped, >= 0) marginal variance per query point.
  // Computed in blocks so large query batches stay memory-bounded.
  std::pair<Vector, Vector> marginals(const Matrix& xq) const {
    detail::check_dim(xq, spec_, "GaussianProcess::marginals");
    const Eigen::Index q = xq.rows();
    if (train_size() == 0)
      return {Vector::Zero(q), Vector::Constant(q, spec_.signal_variance)};
    Vector mu(q), var(q);
    constexpr Eigen::Index kBlock = 8192;
    for (Eigen::Index start = 0; start < q; start += kBlock) {
      const Eigen::Index len = std::min(kBlock, q - start);
      const Matrix kq = kernel_cross(xq.middleRows(start, len), x_, spec_);
      mu.segment(start, len) = kq * alpha_;
      const Matrix v = chol_.triangularView<Eigen::Lower>().solve(kq.transpose());
      var.segment(start, len) =
          (Vector::Constant(len, spec_.signal_variance) - v.colwise().squaredNorm().transpose())
              .cwiseMax(0.0);
    }
    return {mu, var};
  }

  // Full predictive Gaussian (mean, covariance) at query points; the
  // covariance is symmetrized and its diagonal clamped at zero.
  std::pair<Vector, Matrix> joint(const Matrix& xq) const {
    detail::check_dim(xq, spec_, "GaussianProcess::joint");
    if (train_size() == 0) return {Vector::Zero(xq.rows()), kernel_self(xq, spec_, false)};
    const Matrix kq = kernel_cross(xq, x_, spec_);
    const Vector mu = kq * alpha_;
    const Matrix v = chol_.triangularView<Eigen::Lower>().solve(kq.transpose());
    Matrix cov = kernel_self(xq, spec_, false) - v.transpose() * v;
    cov = 0.5 * (cov + cov.transpose());
    cov.diagonal() = cov.diagonal().cwiseMax(0.0);
    return {mu, cov};
  }

  // m joint draws of the latent function at xq (rows are draws), optionally
  // with independent noise of variance extra_noise added to each coordinate.
  // Deterministic given the rng state.
  Matrix sample(const Matrix& xq, Eigen::Index m, Rng& rng, double extra_noise = 0.0) const {
    if (m < 0) throw InputError("GaussianProcess::sample: m must be >= 0");
    const Eigen::Index k = xq.rows();
    if (m == 0) return Matrix(0, k);
    auto [mu, cov] = joint(xq);
    cov.diagonal().array() += extra_noise;
    const Matrix f = detail::sampling_factor(cov);
    const Matrix z = rng.normal_matrix(m, k);
    return (z * f.transpose()).rowwise() + mu.transpose();
  }

  // -log density of the training targets under N(0, K + noise).
  double nll() const {
    const Eigen::Index n = train_size();
    if (n == 0) return 0.0;
    const Vector v = chol_.triangularView<Eigen::Lower>().solve(y_);
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) log_det += std::log(chol_(i, i));
    return 0.5 * v.squaredNorm() + log_det +
           0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
  }

 private:
  KernelSpec spec_;
  Matrix x_;      // n x d training inputs
  Vector y_;      // n training targets
  Vector noise_;  // per-observation noise variances
  Matrix chol_;   // lower Cholesky of K + diag(noise)
  Vector alpha_;  // (K + diag(noise))^-1 y
};

inline double negative_log_likelihood(const Matrix& x, const Vector& y,
                                      const KernelSpec& spec) {
  return GaussianProcess::fit(x, y, spec).nll();
}

inline double negative_log_likelihood(const Matrix& x, const Vector& y,
                                      const KernelSpec& spec,
                                      const Vector& observation_noise) {
  return GaussianProcess::fit(x, y, spec, observation_noise).nll();
}

}  // namespace screenbo
