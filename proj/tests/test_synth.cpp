#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "screenbo/synth.hpp"

using namespace screenbo;

TEST_CASE("config validation") {
  SynthConfig sc;
  sc.n = 1;
  CHECK_THROWS_AS(sc.validate(), InputError);
  sc.n = 10;
  sc.theta = -0.1;
  CHECK_THROWS_AS(sc.validate(), InputError);
  sc.theta = 2.0;
  CHECK_THROWS_AS(sc.validate(), InputError);
}

TEST_CASE("covariance diagonals are exact") {
  SynthConfig sc;
  sc.n = 4;
  sc.seed = 1;
  const Dataset data = generate_problem(sc);
  const Matrix cc = synth_cheap_covariance(sc, data.features);
  for (int i = 0; i < 4; ++i) CHECK(cc(i, i) == 0.0625 + 0.0625);
  const Matrix ce = synth_expensive_covariance(sc, data.features, data.cheap_scores);
  for (int i = 0; i < 4; ++i) CHECK(ce(i, i) == 1.0 + 0.05 * 0.05);
}

TEST_CASE("theta zero couples only through the cheap score") {
  SynthConfig sc;
  sc.theta = 0.0;
  Matrix x(2, 1);
  x << 0.1, 0.95;  // far apart in x
  Vector cheap(2);
  cheap << 0.4, 0.4;  // identical cheap scores
  const Matrix ce = synth_expensive_covariance(sc, x, cheap);
  CHECK(ce(0, 1) == 1.0);
  CHECK(ce(1, 0) == 1.0);
}

TEST_CASE("theta pi/2 couples only through the features") {
  SynthConfig sc;
  sc.theta = M_PI / 2.0;
  Matrix x(2, 1);
  x << 0.3, 0.3;
  Vector cheap(2);
  cheap << -2.0, 5.0;  // wildly different cheap scores
  const Matrix ce = synth_expensive_covariance(sc, x, cheap);
  CHECK(ce(0, 1) == 1.0);

  Vector cheap_eq(2);
  x << 0.3, 0.55;  // one lengthscale apart
  cheap_eq << 1.0, -1.0;
  const Matrix ce2 = synth_expensive_covariance(sc, x, cheap_eq);
  CHECK(ce2(0, 1) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
}

TEST_CASE("covariances are symmetric positive semidefinite") {
  for (double theta : {0.0, M_PI / 4.0, M_PI / 2.0}) {
    SynthConfig sc;
    sc.n = 30;
    sc.theta = theta;
    sc.seed = 3;
    const Dataset data = generate_problem(sc);
    const Matrix ce = synth_expensive_covariance(sc, data.features, data.cheap_scores);
    CHECK((ce - ce.transpose()).cwiseAbs().maxCoeff() == 0.0);
    Eigen::SelfAdjointEigenSolver<Matrix> es(ce);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("same seed regenerates the identical problem") {
  SynthConfig sc;
  sc.n = 20;
  sc.theta = 0.6;
  sc.seed = 12345;
  const Dataset a = generate_problem(sc);
  const Dataset b = generate_problem(sc);
  CHECK((a.features - b.features).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.cheap_scores - b.cheap_scores).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.expensive_scores - b.expensive_scores).cwiseAbs().maxCoeff() == 0.0);
  SynthConfig sc2 = sc;
  sc2.seed = 54321;
  const Dataset c = generate_problem(sc2);
  CHECK((a.cheap_scores - c.cheap_scores).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("whitened scores from regenerated problems are standard normal") {
  // End-to-end distribution check: whiten each regeneration's scores with the
  // oracle-computed covariance for its own draw of x (and cheap scores), then
  // pool; coordinates must look iid standard normal.
  const int n = 5;
  const int reps = 10000;
  Matrix wc(reps, n), we(reps, n);
  for (int r = 0; r < reps; ++r) {
    SynthConfig sc;
    sc.n = n;
    sc.theta = M_PI / 4.0;
    sc.seed = 1000 + static_cast<std::uint64_t>(r);
    const Dataset data = generate_problem(sc);

    Matrix cov_c = oracle::kernel(data.features, data.features, 0.0625,
                                  Vector::Constant(1, 0.25));
    cov_c += Matrix::Identity(n, n) * 0.0625;
    wc.row(r) = Eigen::LLT<Matrix>(cov_c)
                    .matrixL()
                    .solve(data.cheap_scores)
                    .transpose();

    Matrix z(n, 2);
    z.col(0) = data.features.col(0);
    z.col(1) = data.cheap_scores;
    const double s = std::sin(sc.theta), c = std::cos(sc.theta);
    Vector ls(2);
    ls << 0.25 / s, 0.25 / c;
    Matrix cov_e = oracle::kernel(z, z, 1.0, ls);
    cov_e += Matrix::Identity(n, n) * 0.0025;
    we.row(r) = Eigen::LLT<Matrix>(cov_e)
                    .matrixL()
                    .solve(data.expensive_scores)
                    .transpose();
  }
  for (const Matrix* w : {&wc, &we}) {
    for (int j = 0; j < n; ++j) {
      const double mean = w->col(j).mean();
      const double var = (w->col(j).array() - mean).square().sum() / (reps - 1);
      CHECK(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(reps)));
      CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / reps));
    }
    // A couple of cross-correlations.
    for (auto [a, b] : {std::pair{0, 1}, std::pair{2, 4}}) {
      const double corr = (w->col(a).array() * w->col(b).array()).mean();
      CHECK(std::abs(corr) < 4.0 / std::sqrt(static_cast<double>(reps)));
    }
  }
}

TEST_CASE("the true model's kernels mirror the generative covariances") {
  SynthConfig sc;
  sc.theta = 0.3;
  const CovariateModel model = synth_true_model(sc);
  CHECK(model.f_spec().signal_variance == 0.0625);
  CHECK(model.f_spec().lengthscales[0] == 0.25);
  CHECK(model.sigma_cheap() == 0.25);
  CHECK(model.sigma_expensive() == 0.05);
  CHECK(model.g_spec().lengthscales[0] == doctest::Approx(0.25 / std::sin(0.3)));
  CHECK(model.g_spec().lengthscales[1] == doctest::Approx(0.25 / std::cos(0.3)));

  sc.theta = 0.0;
  const CovariateModel flat = synth_true_model(sc);
  CHECK(std::isinf(flat.g_spec().lengthscales[0]));
  CHECK(flat.g_spec().lengthscales[1] == 0.25);
}
