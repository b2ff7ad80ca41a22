#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "screenbo/models.hpp"
#include "screenbo/synth.hpp"

using namespace screenbo;

namespace {

struct Screen {
  Dataset data;
  ScreenState state;
};

// Random pool with the first n_full candidates fully tested and the next
// n_cheap cheap-tested.
Screen make_screen(Rng& rng, int n, int d, int n_cheap, int n_full) {
  Screen s;
  s.data.features.resize(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) s.data.features(i, j) = 2.0 * rng.uniform();
  s.data.cheap_scores = rng.normal_vector(n);
  s.data.expensive_scores = rng.normal_vector(n);
  for (int i = 0; i < n; ++i) s.data.ids.push_back(std::to_string(i));
  s.state = ScreenState(std::make_shared<const Eigen::MatrixXd>(s.data.features),
                        1e6, 0.2, 1.0);
  for (int i = 0; i < n_full + n_cheap; ++i) s.state.apply({i, TestKind::cheap}, s.data);
  for (int i = 0; i < n_full; ++i) s.state.apply({i, TestKind::expensive}, s.data);
  return s;
}

CovariateModel make_covariate(int d) {
  KernelSpec f = KernelSpec::isotropic(1.0, 0.8, d);
  KernelSpec g = KernelSpec::isotropic(1.5, 1.0, d + 1);
  return CovariateModel(f, g, 0.3, 0.1);
}

MultiFidelityModel make_multi_fidelity(int d) {
  return MultiFidelityModel(KernelSpec::isotropic(1.0, 0.8, d), 0.3, 0.1);
}

}  // namespace

TEST_CASE("predict_cheap with no data is the prior plus cheap noise") {
  Rng rng(1);
  Screen s = make_screen(rng, 5, 2, 0, 0);
  const CovariateModel cov = make_covariate(2);
  const GaussianMarginals m = cov.predict_cheap(s.state, {0, 3});
  CHECK(m.mean.cwiseAbs().maxCoeff() == 0.0);
  CHECK(m.var[0] == doctest::Approx(1.0 + 0.09).epsilon(1e-12));

  const MultiFidelityModel mf = make_multi_fidelity(2);
  const GaussianMarginals m2 = mf.predict_cheap(s.state, {0, 3});
  CHECK(m2.var[1] == doctest::Approx(1.0 + 0.09).epsilon(1e-12));
}

TEST_CASE("predict_cheap rejects cheap-tested ids") {
  Rng rng(2);
  Screen s = make_screen(rng, 5, 2, 2, 1);
  const CovariateModel cov = make_covariate(2);
  CHECK_THROWS_AS(cov.predict_cheap(s.state, {1}), InputError);
}

TEST_CASE("predict_cheap at a coincident location reproduces the revealed score") {
  Rng rng(3);
  Screen s = make_screen(rng, 4, 1, 1, 0);
  s.data.features(2, 0) = s.data.features(0, 0);  // candidate 2 sits on candidate 0
  s.state = ScreenState(std::make_shared<const Eigen::MatrixXd>(s.data.features), 1e6, 0.2, 1.0);
  s.state.apply({0, TestKind::cheap}, s.data);
  KernelSpec f = KernelSpec::isotropic(1.0, 0.8, 1);
  KernelSpec g = KernelSpec::isotropic(1.0, 1.0, 2);
  const CovariateModel cov(f, g, 1e-9, 0.1);  // effectively noiseless cheap test
  const GaussianMarginals m = cov.predict_cheap(s.state, {2});
  CHECK(m.mean[0] == doctest::Approx(s.data.cheap_scores[0]).epsilon(1e-6));
}

TEST_CASE("predict_cheap matches the dense conditioning oracle") {
  Rng rng(4);
  for (int rep = 0; rep < 8; ++rep) {
    Screen s = make_screen(rng, 8, 2, 3, 2);
    const CovariateModel cov = make_covariate(2);
    const std::vector<int> query = {5, 7};
    const GaussianMarginals m = cov.predict_cheap(s.state, query);

    Matrix xo(5, 2);
    Vector yo(5);
    for (int i = 0; i < 5; ++i) {
      xo.row(i) = s.data.features.row(i);
      yo[i] = s.data.cheap_scores[i];
    }
    Matrix xq(2, 2);
    xq.row(0) = s.data.features.row(5);
    xq.row(1) = s.data.features.row(7);
    const auto ref = oracle::condition(xo, yo, xq, 1.0, Vector::Constant(2, 0.8), 0.09);
    for (int j = 0; j < 2; ++j) {
      CHECK(std::abs(m.mean[j] - ref.mean[j]) < 1e-8);
      CHECK(std::abs(m.var[j] - (ref.cov(j, j) + 0.09)) < 1e-8);
    }
  }
}

TEST_CASE("fully tested ids give exactly pinned sample columns") {
  Rng rng(5);
  Screen s = make_screen(rng, 6, 2, 2, 3);
  const CovariateModel cov = make_covariate(2);
  Rng draw(10);
  const SampleSet ss = cov.joint_expensive_samples(s.state, {0, 1, 2}, 64, draw);
  for (int j = 0; j < 3; ++j) {
    CHECK(ss.pinned[static_cast<std::size_t>(j)] == 1);
    for (int r = 0; r < 64; ++r)
      CHECK(ss.draws(r, j) == s.data.expensive_scores[j]);
  }
  Rng draw2(11);
  const SampleSet empty = cov.joint_expensive_samples(s.state, {0, 4}, 0, draw2);
  CHECK(empty.draws.rows() == 0);
  CHECK(empty.draws.cols() == 2);
}

TEST_CASE("cheap-tested marginals match the single-GP oracle") {
  Rng rng(6);
  Screen s = make_screen(rng, 7, 2, 2, 3);
  const CovariateModel cov = make_covariate(2);
  const int tu_id = 3;
  const int m = 100000;
  Rng draw(20);
  const SampleSet ss = cov.joint_expensive_samples(s.state, {tu_id, 5}, m, draw);

  // Oracle: condition g on the three fully tested triples, query (x, y_cheap).
  Matrix zo(3, 3);
  Vector yo(3);
  for (int i = 0; i < 3; ++i) {
    zo(i, 0) = s.data.features(i, 0);
    zo(i, 1) = s.data.features(i, 1);
    zo(i, 2) = s.data.cheap_scores[i];
    yo[i] = s.data.expensive_scores[i];
  }
  Matrix zq(1, 3);
  zq << s.data.features(tu_id, 0), s.data.features(tu_id, 1), s.data.cheap_scores[tu_id];
  const auto ref = oracle::condition(zo, yo, zq, 1.5, Vector::Constant(3, 1.0), 0.01);
  const double ref_mean = ref.mean[0];
  const double ref_var = ref.cov(0, 0) + 0.01;

  const double emp_mean = ss.draws.col(0).mean();
  const double emp_var =
      (ss.draws.col(0).array() - emp_mean).square().sum() / static_cast<double>(m - 1);
  const double se_mean = std::sqrt(ref_var / m);
  const double se_var = ref_var * std::sqrt(2.0 / (m - 1));
  CHECK(std::abs(emp_mean - ref_mean) < 4.0 * se_mean);
  CHECK(std::abs(emp_var - ref_var) < 4.0 * se_var);
}

TEST_CASE("untested-candidate sample means match a nested two-stage oracle") {
  Rng rng(7);
  Screen s = make_screen(rng, 7, 2, 2, 3);
  const CovariateModel cov = make_covariate(2);
  const int uu_id = 6;
  const int m = 100000;
  Rng draw(30);
  const SampleSet ss = cov.joint_expensive_samples(s.state, {uu_id}, m, draw);
  const double emp_mean = ss.draws.col(0).mean();
  const double emp_sd = std::sqrt(
      (ss.draws.col(0).array() - emp_mean).square().sum() / static_cast<double>(m - 1));

  // Stage 1: cheap-score marginal at the untested candidate.
  Matrix xo(5, 2);
  Vector yo(5);
  for (int i = 0; i < 5; ++i) {
    xo.row(i) = s.data.features.row(i);
    yo[i] = s.data.cheap_scores[i];
  }
  const auto f_ref =
      oracle::condition(xo, yo, s.data.features.row(uu_id), 1.0, Vector::Constant(2, 0.8), 0.09);
  const double mu_c = f_ref.mean[0];
  const double sd_c = std::sqrt(f_ref.cov(0, 0) + 0.09);

  // Stage 2: average the closed-form g-posterior mean over cheap-score draws.
  Matrix zo(3, 3);
  Vector ye(3);
  for (int i = 0; i < 3; ++i) {
    zo(i, 0) = s.data.features(i, 0);
    zo(i, 1) = s.data.features(i, 1);
    zo(i, 2) = s.data.cheap_scores[i];
    ye[i] = s.data.expensive_scores[i];
  }
  oracle::NormalSource normals(99);
  const int outer = 1000;
  std::vector<double> inner_means;
  inner_means.reserve(outer);
  for (int t = 0; t < outer; ++t) {
    Matrix zq(1, 3);
    zq << s.data.features(uu_id, 0), s.data.features(uu_id, 1), mu_c + sd_c * normals();
    inner_means.push_back(
        oracle::condition(zo, ye, zq, 1.5, Vector::Constant(3, 1.0), 0.01).mean[0]);
  }
  const double oracle_mean = oracle::mean(inner_means);
  const double combined_se = std::sqrt(std::pow(oracle::standard_error(inner_means), 2) +
                                       emp_sd * emp_sd / m);
  CHECK(std::abs(emp_mean - oracle_mean) < 4.0 * combined_se);
}

TEST_CASE("multi-fidelity joint samples are Gaussian (vanishing skewness)") {
  Rng rng(8);
  Screen s = make_screen(rng, 6, 2, 2, 2);
  const MultiFidelityModel mf = make_multi_fidelity(2);
  const int m = 100000;
  Rng draw(40);
  const SampleSet ss = mf.joint_expensive_samples(s.state, {4, 5}, m, draw);
  for (int j = 0; j < 2; ++j) {
    const double mu = ss.draws.col(j).mean();
    const double sd = std::sqrt((ss.draws.col(j).array() - mu).square().sum() / (m - 1));
    const double skew = ((ss.draws.col(j).array() - mu) / sd).cube().sum() / m;
    CHECK(std::abs(skew) < 4.0 * std::sqrt(6.0 / m));
  }
}

TEST_CASE("marginal sampler agrees with the joint sampler per column") {
  Rng rng(9);
  Screen s = make_screen(rng, 8, 2, 3, 2);
  const CovariateModel cov = make_covariate(2);
  const std::vector<int> ids = {0, 3, 6, 7};  // pinned, cheap-tested, two untested
  const int m = 60000;
  Rng d1(50), d2(51);
  const SampleSet joint = cov.joint_expensive_samples(s.state, ids, m, d1);
  const SampleSet marg = cov.marginal_expensive_samples(s.state, ids, m, d2);
  for (int j = 0; j < 4; ++j) {
    const double m1 = joint.draws.col(j).mean();
    const double m2 = marg.draws.col(j).mean();
    const double v1 = (joint.draws.col(j).array() - m1).square().sum() / (m - 1);
    const double v2 = (marg.draws.col(j).array() - m2).square().sum() / (m - 1);
    const double se = std::sqrt(v1 / m + v2 / m) + 1e-12;
    CHECK(std::abs(m1 - m2) < 4.0 * se);
    const double sev = (v1 + v2) * std::sqrt(2.0 / (m - 1)) + 1e-12;
    CHECK(std::abs(v1 - v2) < 4.0 * sev);
  }
}

TEST_CASE("two half-size sample sets agree within combined error") {
  Rng rng(10);
  Screen s = make_screen(rng, 6, 1, 2, 2);
  const CovariateModel cov = make_covariate(1);
  const int m = 30000;
  Rng d1(60), d2(61);
  const SampleSet a = cov.joint_expensive_samples(s.state, {4, 5}, m, d1);
  const SampleSet b = cov.joint_expensive_samples(s.state, {4, 5}, m, d2);
  for (int j = 0; j < 2; ++j) {
    const double m1 = a.draws.col(j).mean();
    const double m2 = b.draws.col(j).mean();
    const double v1 = (a.draws.col(j).array() - m1).square().sum() / (m - 1);
    const double v2 = (b.draws.col(j).array() - m2).square().sum() / (m - 1);
    CHECK(std::abs(m1 - m2) < 4.0 * std::sqrt(v1 / m + v2 / m));
  }
}

TEST_CASE("refit improves or keeps the data NLL and caches by counts") {
  SynthConfig sc;
  sc.n = 60;
  sc.theta = M_PI / 4.0;
  sc.seed = 99;
  const Dataset data = generate_problem(sc);
  ScreenState state(std::make_shared<const Eigen::MatrixXd>(data.features), 1e6, 0.2, 1.0);
  for (int i = 0; i < 30; ++i) state.apply({i, TestKind::cheap}, data);
  for (int i = 0; i < 12; ++i) state.apply({i, TestKind::expensive}, data);

  CovariateModel init(KernelSpec::isotropic(0.5, 1.0, 1), KernelSpec::isotropic(0.5, 1.0, 2),
                      0.5, 0.5);
  RefitSettings settings;
  settings.restarts = 2;
  settings.nm.max_iterations = 150;
  settings.seed = 5;
  const CovariateModel fitted = init.refit(state, settings);

  // NLL of the cheap data under f before/after.
  Matrix xc(30, 1);
  Vector yc(30);
  for (int i = 0; i < 30; ++i) {
    xc(i, 0) = data.features(i, 0);
    yc[i] = data.cheap_scores[i];
  }
  auto f_nll = [&](const CovariateModel& mdl) {
    KernelSpec spec = mdl.f_spec();
    spec.noise_variance += mdl.sigma_cheap() * mdl.sigma_cheap();
    return negative_log_likelihood(xc, yc, spec);
  };
  CHECK(f_nll(fitted) <= f_nll(init) + 1e-9);

  // No new data: refit is a no-op thanks to the count cache.
  const CovariateModel again = fitted.refit(state, settings);
  CHECK(again.f_spec().signal_variance == fitted.f_spec().signal_variance);
  CHECK(again.g_spec().lengthscales == fitted.g_spec().lengthscales);
}

TEST_CASE("refit keeps the prior when there is too little data") {
  Rng rng(11);
  Screen s = make_screen(rng, 5, 1, 1, 0);  // one cheap observation, nothing expensive
  CovariateModel init(KernelSpec::isotropic(0.7, 0.9, 1), KernelSpec::isotropic(0.7, 0.9, 2),
                      0.4, 0.4);
  RefitSettings settings;
  int notes = 0;
  settings.log = [&](const std::string&) { ++notes; };
  const CovariateModel fitted = init.refit(s.state, settings);
  CHECK(fitted.f_spec().signal_variance == init.f_spec().signal_variance);
  CHECK(fitted.g_spec().signal_variance == init.g_spec().signal_variance);
  CHECK(notes == 2);
}

TEST_CASE("generate-and-refit recovers g's cheap-score lengthscale within factor two") {
  // theta = 0: the expensive kernel depends only on the cheap score, with
  // lengthscale 0.25 in that coordinate.
  SynthConfig sc;
  sc.n = 300;
  sc.theta = 0.0;
  sc.seed = 7;
  const Dataset data = generate_problem(sc);
  ScreenState state(std::make_shared<const Eigen::MatrixXd>(data.features), 1e9, 0.2, 1.0);
  for (int i = 0; i < 300; ++i) state.apply({i, TestKind::cheap}, data);
  for (int i = 0; i < 300; ++i) state.apply({i, TestKind::expensive}, data);

  CovariateModel init(KernelSpec::isotropic(0.1, 1.0, 1), KernelSpec::isotropic(0.5, 1.5, 2),
                      0.3, 0.3);
  RefitSettings settings;
  settings.restarts = 2;
  settings.nm.max_iterations = 200;
  settings.bounds.lengthscale = {1e-2, 1e3};
  settings.seed = 13;
  const CovariateModel fitted = init.refit(state, settings);
  const double ls = fitted.g_spec().lengthscales[1];
  CHECK(ls > 0.125);
  CHECK(ls < 0.5);
}
