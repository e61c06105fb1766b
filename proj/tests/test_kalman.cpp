#include <doctest.h>

#include <cmath>

#include "kinetrack/errors.hpp"
#include "kinetrack/kalman.hpp"
#include "kinetrack/rng.hpp"
#include "kinetrack/synthetic.hpp"

using namespace kinetrack;

namespace {

StackedModel single(double q, double sigma, double dt = 0.1) {
  return stack(build_single(dt, q * Eigen::Matrix2d::Identity(), {sigma, sigma}));
}

// Random PSD Q and positive sigma, seeded.
StackedModel random_model(Pcg32& rng, double dt = 0.1) {
  Eigen::Matrix2d c;
  c << 10.0 + 10.0 * rng.next_unit(), 0.0, 5.0 * (rng.next_unit() - 0.5),
      10.0 + 10.0 * rng.next_unit();
  const Eigen::Matrix2d q = c * c.transpose();
  const Eigen::Vector2d sigma(5.0 + 10.0 * rng.next_unit(), 5.0 + 10.0 * rng.next_unit());
  return stack(build_single(dt, q, sigma));
}

double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).lpNorm<Eigen::Infinity>();
}

}  // namespace

TEST_CASE("filter_step with zero covariance ignores the observation") {
  auto model = single(0.0, 1.0);
  FilterState prior{Eigen::Vector4d(0, 0, 10, 0), Eigen::Matrix4d::Zero(), 0};
  auto r = filter_step(model, prior, Eigen::VectorXd(Eigen::Vector2d(0, 0)));
  CHECK(max_abs_diff(r.next.mean, Eigen::Vector4d(1, 0, 10, 0)) == 0.0);
  CHECK(r.next.cov.norm() == 0.0);
  CHECK(r.next.t == 1);
}

TEST_CASE("missing observation gives the pure prediction step") {
  auto model = single(25.0, 3.0);
  Pcg32 rng(1);
  Eigen::Vector4d mean;
  for (int i = 0; i < 4; ++i) mean[i] = 100.0 * rng.next_gaussian();
  FilterState prior{mean, Eigen::Matrix4d::Identity(), 3};
  auto r = filter_step(model, prior, std::nullopt);
  const Eigen::Vector4d expected = model.entities[0].T * mean;
  CHECK(max_abs_diff(r.next.mean, expected) == 0.0);
  // NaN components count as missing too.
  Eigen::VectorXd nan_obs = Eigen::Vector2d::Constant(std::numeric_limits<double>::quiet_NaN());
  auto r2 = filter_step(model, prior, nan_obs);
  CHECK(max_abs_diff(r2.next.mean, expected) == 0.0);
}

TEST_CASE("one filter step matches the conditioning oracle") {
  Pcg32 rng(42);
  auto model = random_model(rng);
  auto sc = simulate(model, 1, 42, Eigen::Vector4d(100, -50, 30, 20));
  FilterState prior{Eigen::Vector4d::Zero(), Eigen::Matrix4d::Identity(), 0};
  auto r = filter_step(model, prior, Eigen::VectorXd(sc.observations.row(0).transpose()));
  auto oracle = conditioning_oracle(model, sc.observations, prior.mean, prior.cov);
  CHECK(max_abs_diff(r.posterior.mean, oracle.mean[0]) < 1e-10);
  CHECK(max_abs_diff(r.posterior.cov, oracle.cov[0]) < 1e-10);
}

TEST_CASE("filter_pass matches the oracle on proper-prior windows") {
  Pcg32 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    auto model = random_model(rng);
    auto sc = simulate(model, 10, 1000 + trial, Eigen::Vector4d(0, 0, 200, -100));
    const Eigen::Matrix4d prior_cov = 1e4 * Eigen::Matrix4d::Identity();
    const Eigen::Vector4d prior_mean = Eigen::Vector4d::Zero();
    auto pass = filter_pass(model, sc.observations, DiffuseInit::proper(prior_mean, prior_cov));
    auto oracle = conditioning_oracle(model, sc.observations, prior_mean, prior_cov);
    for (int t = 0; t < 10; ++t) {
      CHECK(max_abs_diff(pass.filtered[t].mean, oracle.mean[t]) < 1e-8);
      CHECK(max_abs_diff(pass.filtered[t].cov, oracle.cov[t]) < 1e-8);
    }
    CHECK(pass.log_likelihood() == doctest::Approx(oracle.log_density).epsilon(1e-9));
    // The one-step-ahead state is the propagated last posterior.
    CHECK(max_abs_diff(pass.one_step_ahead.mean,
                       model.transition() * pass.filtered[9].mean) < 1e-10);
  }
}

TEST_CASE("noiseless straight-line data is predicted exactly after the diffuse phase") {
  auto model = single(0.0, 1e-6);
  Eigen::MatrixXd obs(10, 2);
  for (int t = 0; t < 10; ++t) obs.row(t) = Eigen::RowVector2d(30.0 * (t + 1), -12.0 * (t + 1));
  auto pass = filter_pass(model, obs, DiffuseInit::exact_diffuse(4));
  for (int t = pass.diffuse_steps; t < 10; ++t) {
    const Eigen::Vector2d pred = pass.predicted[t].mean.head<2>();
    CHECK(max_abs_diff(pred, obs.row(t).transpose()) < 1e-6);
  }
}

TEST_CASE("diffuse phase ends after at most 4 steps") {
  Pcg32 rng(21);
  auto model = random_model(rng);
  auto sc = simulate(model, 10, 55, Eigen::Vector4d(0, 0, 100, 100));
  auto pass = filter_pass(model, sc.observations, DiffuseInit::exact_diffuse(4));
  CHECK(pass.diffuse_steps <= 4);
  CHECK(pass.diffuse_steps == 2);  // two positions determine position and velocity
  for (int t = 0; t < pass.diffuse_steps; ++t) CHECK(pass.loglik_terms[t].diffuse);
  for (int t = pass.diffuse_steps; t < 10; ++t) CHECK(!pass.loglik_terms[t].diffuse);
}

TEST_CASE("large-kappa runs are insensitive to kappa after the diffuse phase") {
  // The kappa-induced shrinkage on the velocity estimate scales like
  // 2*sigma^2/(dt^2*kappa), so the comparison scenario keeps sigma small.
  auto model = single(100.0, 0.5);
  auto sc = simulate(model, 10, 77, Eigen::Vector4d(50, 50, -80, 40));
  auto pass6 = filter_pass(model, sc.observations, DiffuseInit::large_kappa(4, 1e6));
  auto pass8 = filter_pass(model, sc.observations, DiffuseInit::large_kappa(4, 1e8));
  for (int t = 2; t < 10; ++t) {
    const double scale = std::max(1.0, pass8.filtered[t].mean.lpNorm<Eigen::Infinity>());
    CHECK(max_abs_diff(pass6.filtered[t].mean, pass8.filtered[t].mean) < 1e-4 * scale);
  }
}

TEST_CASE("exact diffuse is the large-kappa limit") {
  auto model = single(150.0, 3.0);
  auto sc = simulate(model, 10, 500, Eigen::Vector4d(0, 0, 150, -60));
  auto exact = filter_pass(model, sc.observations, DiffuseInit::exact_diffuse(4));
  double prev_err = std::numeric_limits<double>::infinity();
  for (double kappa : {1e4, 1e6, 1e8}) {
    auto approx = filter_pass(model, sc.observations, DiffuseInit::large_kappa(4, kappa));
    double err = 0.0;
    for (int t = exact.diffuse_steps; t < 10; ++t) {
      const double mean_scale = std::max(1.0, exact.filtered[t].mean.lpNorm<Eigen::Infinity>());
      const double cov_scale = std::max(1.0, exact.filtered[t].cov.lpNorm<Eigen::Infinity>());
      err = std::max(err, max_abs_diff(exact.filtered[t].mean, approx.filtered[t].mean) /
                              mean_scale);
      err = std::max(err,
                     max_abs_diff(exact.filtered[t].cov, approx.filtered[t].cov) / cov_scale);
    }
    CHECK(err < prev_err);
    prev_err = err;
    if (kappa == 1e8) CHECK(err < 1e-4);
  }
}

TEST_CASE("univariate pass equals the batch pass on a single entity") {
  Pcg32 rng(42);
  auto model = random_model(rng);
  auto sc = simulate(model, 10, 42, Eigen::Vector4d(0, 0, 120, 90));
  auto batch = filter_pass(model, sc.observations, DiffuseInit::exact_diffuse(4));
  auto uni = univariate_filter_pass(model, sc.observations, DiffuseInit::exact_diffuse(4));
  for (int t = 0; t < 10; ++t) {
    CHECK(max_abs_diff(batch.filtered[t].mean, uni.filtered[t].mean) < 1e-8);
    CHECK(max_abs_diff(batch.filtered[t].cov, uni.filtered[t].cov) < 1e-8);
  }
  CHECK(uni.log_likelihood() == doctest::Approx(batch.log_likelihood()).epsilon(1e-10));
  CHECK(uni.max_inverted_dim == 1);
}

TEST_CASE("univariate pass equals the batch pass on 23 stacked entities") {
  Pcg32 rng(4242);
  std::vector<SingleEntityModel> entities;
  for (int e = 0; e < 23; ++e) entities.push_back(random_model(rng).entities[0]);
  auto model = stack(entities);
  Eigen::VectorXd init(model.state_dim());
  for (int i = 0; i < init.size(); ++i) init[i] = 50.0 * rng.next_gaussian();
  auto sc = simulate(model, 10, 11, init);

  auto batch = filter_pass(model, sc.observations, DiffuseInit::exact_diffuse(92));
  auto uni = univariate_filter_pass(model, sc.observations, DiffuseInit::exact_diffuse(92));
  for (int t = 0; t < 10; ++t) {
    CHECK(max_abs_diff(batch.filtered[t].mean, uni.filtered[t].mean) < 1e-6);
    CHECK(max_abs_diff(batch.filtered[t].cov, uni.filtered[t].cov) < 1e-6);
  }
  CHECK(uni.log_likelihood() ==
        doctest::Approx(batch.log_likelihood()).epsilon(1e-8));
  // The univariate form never inverts anything larger than a scalar.
  CHECK(uni.max_inverted_dim == 1);
  CHECK(batch.max_inverted_dim == 46);
}

TEST_CASE("univariate equals batch with missing observations") {
  Pcg32 rng(66);
  auto model = stack({random_model(rng).entities[0], random_model(rng).entities[0]});
  Eigen::VectorXd init = Eigen::VectorXd::Zero(8);
  auto sc = simulate(model, 10, 15, init);
  Eigen::MatrixXd obs = sc.observations;
  obs(4, 2) = std::numeric_limits<double>::quiet_NaN();  // entity 1 x missing
  obs(4, 3) = std::numeric_limits<double>::quiet_NaN();  // entity 1 y missing
  obs(7, 1) = std::numeric_limits<double>::quiet_NaN();  // one scalar missing

  auto batch = filter_pass(model, obs, DiffuseInit::exact_diffuse(8));
  auto uni = univariate_filter_pass(model, obs, DiffuseInit::exact_diffuse(8));
  for (int t = 0; t < 10; ++t) {
    CHECK(max_abs_diff(batch.filtered[t].mean, uni.filtered[t].mean) < 1e-8);
    CHECK(max_abs_diff(batch.filtered[t].cov, uni.filtered[t].cov) < 1e-8);
  }
  CHECK(uni.log_likelihood() == doctest::Approx(batch.log_likelihood()).epsilon(1e-9));
}

TEST_CASE("covariances stay symmetric and PSD through the pass") {
  Pcg32 rng(77);
  for (int trial = 0; trial < 5; ++trial) {
    auto model = random_model(rng);
    auto sc = simulate(model, 20, 900 + trial, Eigen::Vector4d(0, 0, 60, 60));
    auto pass = filter_pass(model, sc.observations, DiffuseInit::exact_diffuse(4));
    for (const auto& st : pass.filtered) {
      CHECK((st.cov - st.cov.transpose()).lpNorm<Eigen::Infinity>() < 1e-10);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(st.cov);
      CHECK(es.eigenvalues().minCoeff() > -1e-10 * std::max(1.0, st.cov.norm()));
    }
  }
}

TEST_CASE("a numerically singular F names the failing step") {
  auto m = build_single(0.1, Eigen::Matrix2d::Zero(), {1.0, 1e-15});
  FilterState prior{Eigen::Vector4d::Zero(), Eigen::Matrix4d::Zero(), 5};
  CHECK_THROWS_WITH_AS(
      filter_step(stack(m), prior, Eigen::VectorXd(Eigen::Vector2d(0, 0))),
      doctest::Contains("step 5"), NumericError);
}

TEST_CASE("stacked filtering equals independent per-entity filtering") {
  Pcg32 rng(31);
  std::vector<SingleEntityModel> entities;
  for (int e = 0; e < 23; ++e) entities.push_back(random_model(rng).entities[0]);
  auto joint = stack(entities);
  Eigen::VectorXd init(joint.state_dim());
  for (int i = 0; i < init.size(); ++i) init[i] = 40.0 * rng.next_gaussian();
  auto sc = simulate(joint, 10, 3131, init);

  auto joint_pass = filter_pass(joint, sc.observations, DiffuseInit::exact_diffuse(92));
  for (int e = 0; e < 23; ++e) {
    auto solo = stack(entities[e]);
    auto solo_pass = filter_pass(solo, sc.observations.middleCols(2 * e, 2),
                                 DiffuseInit::exact_diffuse(4));
    for (int t = 0; t < 10; ++t) {
      CHECK(max_abs_diff(joint_pass.filtered[t].mean.segment<4>(4 * e),
                         solo_pass.filtered[t].mean) < 1e-10);
      CHECK(max_abs_diff(joint_pass.filtered[t].cov.block<4, 4>(4 * e, 4 * e),
                         solo_pass.filtered[t].cov) < 1e-10);
    }
  }
}

TEST_CASE("filter CSV dump has one row per step and entity") {
  Pcg32 rng(3);
  auto model = random_model(rng);
  auto sc = simulate(model, 5, 88, Eigen::Vector4d::Zero());
  auto pass = filter_pass(model, sc.observations, DiffuseInit::exact_diffuse(4));
  const std::string csv = filter_result_to_csv(model, pass);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);  // header + 5 rows
  CHECK(csv.rfind("t,entity,x,y,vx,vy,p00", 0) == 0);
}
