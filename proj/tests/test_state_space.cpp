#include <doctest.h>

#include "kinetrack/errors.hpp"
#include "kinetrack/rng.hpp"
#include "kinetrack/state_space.hpp"

using namespace kinetrack;

TEST_CASE("build_single populates the block matrices") {
  auto m = build_single(0.1, Eigen::Matrix2d::Identity(), {1.0, 2.0});
  CHECK(m.T.row(0) == Eigen::RowVector4d(1, 0, 0.1, 0));
  CHECK(m.T.row(1) == Eigen::RowVector4d(0, 1, 0, 0.1));
  CHECK((m.R.col(0) - Eigen::Vector4d(0.005, 0, 0.1, 0)).lpNorm<Eigen::Infinity>() < 1e-15);
  CHECK(m.W * Eigen::Vector4d(3, 4, 5, 6) == Eigen::Vector2d(3, 4));
  CHECK(m.Sigma()(1, 1) == 4.0);
}

TEST_CASE("build_single accepts Q = 0 and rejects bad inputs") {
  CHECK_NOTHROW(build_single(0.1, Eigen::Matrix2d::Zero(), {1.0, 1.0}));
  CHECK_THROWS_AS(build_single(0.0, Eigen::Matrix2d::Identity(), {1.0, 1.0}), NumericError);
  CHECK_THROWS_AS(build_single(0.1, Eigen::Matrix2d::Identity(), {0.0, 1.0}), NumericError);
  Eigen::Matrix2d indefinite;
  indefinite << 1, 2, 2, 1;
  CHECK_THROWS_AS(build_single(0.1, indefinite, {1.0, 1.0}), NumericError);
  CHECK_NOTHROW(build_single(0.1, indefinite, {1.0, 1.0}, /*require_psd=*/false));
}

TEST_CASE("propagate_state follows the finite-difference dynamics") {
  auto m = build_single(0.1, Eigen::Matrix2d::Zero(), {1.0, 1.0});
  CHECK(propagate_state(m, {0, 0, 10, 0}, {0, 0}) == Eigen::Vector4d(1, 0, 10, 0));
  CHECK((propagate_state(m, {0, 0, 0, 0}, {100, -50}) - Eigen::Vector4d(0.5, -0.25, 10, -5))
            .lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK(propagate_state(m, {3, 4, 0, 0}, {0, 0}) == Eigen::Vector4d(3, 4, 0, 0));
}

TEST_CASE("observation of the propagated state ignores acceleration loading") {
  auto m = build_single(0.1, Eigen::Matrix2d::Identity(), {1.0, 1.0});
  Eigen::Matrix<double, 2, 4> wt = m.W * m.T;
  Eigen::Matrix<double, 2, 4> expected;
  expected << 1, 0, 0.1, 0, 0, 1, 0, 0.1;
  CHECK((wt - expected).norm() == 0.0);
}

TEST_CASE("stack of one model equals the single case") {
  auto m = build_single(0.1, 400.0 * Eigen::Matrix2d::Identity(), {10.0, 10.0});
  auto s = stack(m);
  CHECK(s.state_dim() == 4);
  CHECK(s.obs_dim() == 2);
  CHECK((s.transition() - m.T).norm() == 0.0);
  CHECK((s.process_cov() - m.Q).norm() == 0.0);
}

TEST_CASE("23 stacked entities give dimensions 92 and 46") {
  auto m = build_single(0.1, 400.0 * Eigen::Matrix2d::Identity(), {10.0, 10.0});
  auto s = stack(m, 23);
  CHECK(s.state_dim() == 92);
  CHECK(s.obs_dim() == 46);
}

TEST_CASE("stacked blocks sit on the diagonal with zero off-blocks") {
  Eigen::Matrix2d q1, q2;
  q1 << 1, 0.2, 0.2, 2;
  q2 << 3, -0.5, -0.5, 4;
  auto s = stack({build_single(0.1, q1, {1, 1}), build_single(0.1, q2, {2, 2})});
  Eigen::MatrixXd q = s.process_cov();
  CHECK((q.block<2, 2>(0, 0) - q1).norm() == 0.0);
  CHECK((q.block<2, 2>(2, 2) - q2).norm() == 0.0);
  CHECK(q.block<2, 2>(0, 2).norm() == 0.0);
  CHECK(q.block<2, 2>(2, 0).norm() == 0.0);
  CHECK_THROWS_AS(stack({build_single(0.1, q1, {1, 1}), build_single(0.2, q2, {1, 1})}),
                  NumericError);
}

TEST_CASE("log-Cholesky zero vector decodes to identity Q and unit sigma") {
  ParamVector p;
  p.mode = ParamMode::LogCholesky;
  p.values = Eigen::VectorXd::Zero(6);
  auto d = decode_params(p);
  CHECK((d.Q - Eigen::Matrix2d::Identity()).norm() == 0.0);
  CHECK(d.sigma == Eigen::Vector2d(1, 1));
}

TEST_CASE("encode/decode round-trip") {
  Eigen::Matrix2d q = 400.0 * Eigen::Matrix2d::Identity();
  auto p = encode_params(q, {10.0, 10.0});
  auto d = decode_params(p);
  CHECK((d.Q - q).lpNorm<Eigen::Infinity>() < 1e-10);
  CHECK((d.sigma - Eigen::Vector2d(10, 10)).lpNorm<Eigen::Infinity>() < 1e-10);

  Eigen::Matrix2d q2;
  q2 << 25.0, 7.5, 7.5, 81.0;
  auto d2 = decode_params(encode_params(q2, {3.0, 17.0}));
  CHECK((d2.Q - q2).lpNorm<Eigen::Infinity>() < 1e-10);
  CHECK((d2.sigma - Eigen::Vector2d(3, 17)).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("raw mode keeps asymmetric Q entries verbatim") {
  Eigen::Matrix2d q;
  q << 1, 0.5, 0.3, 2;
  auto p = encode_params(q, {10.0, 10.0}, ParamMode::Raw);
  auto d = decode_params(p);
  CHECK((d.Q - q).norm() == 0.0);
  CHECK(d.Q(0, 1) != d.Q(1, 0));
}

TEST_CASE("encode rejects non-PSD Q in log-Cholesky mode") {
  Eigen::Matrix2d bad;
  bad << 1, 2, 2, 1;
  CHECK_THROWS_AS(encode_params(bad, {1.0, 1.0}), NumericError);
  CHECK_NOTHROW(encode_params(bad, {1.0, 1.0}, ParamMode::Raw));
}

TEST_CASE("decoded Q is PSD for arbitrary log-Cholesky inputs") {
  Pcg32 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    ParamVector p;
    p.mode = ParamMode::LogCholesky;
    p.values = Eigen::VectorXd::Zero(6);
    for (int i = 0; i < 5; ++i) p.values[i] = 8.0 * (rng.next_unit() - 0.5);
    auto d = decode_params(p);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(d.Q);
    CHECK(es.eigenvalues().minCoeff() >= -1e-12 * std::max(1.0, d.Q.norm()));
    CHECK(d.sigma.minCoeff() > 0.0);
  }
}

TEST_CASE("free-coordinate mapping round-trips") {
  Pcg32 rng(9);
  for (ParamMode mode : {ParamMode::LogCholesky, ParamMode::Raw}) {
    Eigen::VectorXd free(ParamVector::free_size(mode, 2));
    for (int i = 0; i < free.size(); ++i) free[i] = rng.next_gaussian();
    auto p = ParamVector::from_free(mode, 2, free);
    CHECK((p.to_free() - free).norm() == 0.0);
    CHECK(p.entity_count() == 2);
  }
}

TEST_CASE("model JSON round-trip") {
  Eigen::Matrix2d q;
  q << 400, 30, 30, 380;
  auto s = stack({build_single(0.1, q, {10, 12}), build_single(0.1, 2.0 * q, {9, 9})});
  auto back = model_from_json(model_to_json(s));
  CHECK(back.entity_count() == 2);
  CHECK(back.dt() == 0.1);
  CHECK((back.entities[0].Q - q).norm() == 0.0);
  CHECK(back.entities[1].sigma_x == 9.0);
  CHECK_THROWS_AS(model_from_json("{not json"), DataError);
}
