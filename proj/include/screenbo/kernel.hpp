#pragma once

// Squared-exponential (RBF) kernel with per-dimension lengthscales.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>

#include "screenbo/errors.hpp"

namespace screenbo {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Hyperparameters of one RBF Gaussian process. Lengthscales are per input
// dimension; an infinite lengthscale makes the kernel ignore that dimension,
// which is how axis-degenerate covariances (mixing angle 0 or pi/2 in the
// synthetic generator) are represented.
struct KernelSpec {
  double signal_variance = 1.0;
  Vector lengthscales = Vector::Ones(1);
  double noise_variance = 0.0;

  void validate() const {
    if (!(signal_variance > 0.0))
      throw InputError("KernelSpec: signal_variance must be > 0");
    if (!(noise_variance >= 0.0))
      throw InputError("KernelSpec: noise_variance must be >= 0");
    for (Eigen::Index i = 0; i < lengthscales.size(); ++i)
      if (!(lengthscales[i] > 0.0))
        throw InputError("KernelSpec: lengthscales must be > 0");
  }

  Eigen::Index input_dim() const { return lengthscales.size(); }

  static KernelSpec isotropic(double signal_variance, double lengthscale,
                              Eigen::Index dim, double noise_variance = 0.0) {
    KernelSpec spec;
    spec.signal_variance = signal_variance;
    spec.lengthscales = Vector::Constant(dim, lengthscale);
    spec.noise_variance = noise_variance;
    return spec;
  }
};

namespace detail {

// Inverse lengthscales; 1/inf == 0 drops the dimension from the distance.
inline Vector inverse_lengthscales(const KernelSpec& spec) {
  return spec.lengthscales.unaryExpr([](double l) { return 1.0 / l; });
}

inline void check_dim(const Matrix& x, const KernelSpec& spec, const char* who) {
  if (x.cols() != spec.input_dim())
    throw InputError(std::string(who) + ": input has " + std::to_string(x.cols()) +
                     " columns but the kernel expects " +
                     std::to_string(spec.input_dim()));
}

}  // namespace detail

// Cross-covariance matrix K[i,j] = sv * exp(-1/2 sum_k ((a_ik - b_jk)/l_k)^2).
inline Matrix kernel_cross(const Matrix& a, const Matrix& b, const KernelSpec& spec) {
  detail::check_dim(a, spec, "kernel_cross");
  detail::check_dim(b, spec, "kernel_cross");
  const Vector inv = detail::inverse_lengthscales(spec);
  const Matrix aw = a * inv.asDiagonal();
  const Matrix bw = b * inv.asDiagonal();
  const Vector an = aw.rowwise().squaredNorm();
  const Vector bn = bw.rowwise().squaredNorm();
  Matrix d2 = an.replicate(1, b.rows()) + bn.transpose().replicate(a.rows(), 1) -
              2.0 * (aw * bw.transpose());
  return spec.signal_variance *
         d2.unaryExpr([](double d) { return std::exp(-0.5 * std::max(d, 0.0)); });
}

// Symmetric kernel matrix of one point set, optionally with noise_variance on
// the diagonal. Diagonal entries are exact (no round-off from the distance
// expansion) and the result is symmetric by construction.
inline Matrix kernel_self(const Matrix& x, const KernelSpec& spec, bool add_noise) {
  detail::check_dim(x, spec, "kernel_self");
  const Vector inv = detail::inverse_lengthscales(spec);
  const Matrix xw = x * inv.asDiagonal();
  const Eigen::Index n = x.rows();
  Matrix k(n, n);
  const double diag = spec.signal_variance + (add_noise ? spec.noise_variance : 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = diag;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double d2 = (xw.row(i) - xw.row(j)).squaredNorm();
      const double v = spec.signal_variance * std::exp(-0.5 * d2);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

// Spec-level entry point: cross kernel of x1 against x2. When add_noise is
// set the two point sets must be the same set (same row count) and
// noise_variance is added on the diagonal.
inline Matrix kernel_matrix(const Matrix& x1, const Matrix& x2, const KernelSpec& spec,
                            bool add_noise = false) {
  if (x1.cols() != x2.cols())
    throw InputError("kernel_matrix: column counts differ");
  if (add_noise) {
    if (x1.rows() != x2.rows())
      throw InputError("kernel_matrix: add_noise requires X1 and X2 to be the same set");
    return kernel_self(x1, spec, true);
  }
  return kernel_cross(x1, x2, spec);
}

}  // namespace screenbo
