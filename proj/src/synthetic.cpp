#include "kinetrack/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "kinetrack/errors.hpp"
#include "kinetrack/rng.hpp"

namespace kinetrack {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Lower-triangular factor of a 2x2 PSD matrix, tolerating semidefinite
// inputs (zero rows map to zero factor columns).
Eigen::Matrix2d psd_factor_2x2(const Eigen::Matrix2d& q_in) {
  Eigen::Matrix2d q = 0.5 * (q_in + q_in.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(q);
  if (es.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, q.norm()))
    throw NumericError("simulate: Q is not PSD");
  Eigen::Matrix2d l = Eigen::Matrix2d::Zero();
  const double c11_sq = std::max(q(0, 0), 0.0);
  l(0, 0) = std::sqrt(c11_sq);
  l(1, 0) = l(0, 0) > 0.0 ? q(1, 0) / l(0, 0) : 0.0;
  l(1, 1) = std::sqrt(std::max(q(1, 1) - l(1, 0) * l(1, 0), 0.0));
  return l;
}

}  // namespace

SyntheticScenario simulate(const StackedModel& model, int n, std::uint64_t seed,
                           const Eigen::VectorXd& init_state) {
  if (n < 1) throw NumericError("simulate: n must be >= 1");
  if (init_state.size() != model.state_dim())
    throw NumericError("simulate: init_state dimension mismatch");

  const int k = model.entity_count();
  std::vector<Eigen::Matrix2d> factors;
  factors.reserve(k);
  for (const auto& e : model.entities) factors.push_back(psd_factor_2x2(e.Q));

  SyntheticScenario sc;
  sc.model = model;
  sc.n = n;
  sc.seed = seed;
  sc.init_state = init_state;
  sc.truth.resize(n, model.state_dim());
  sc.observations.resize(n, model.obs_dim());

  Pcg32 rng(seed);
  Eigen::VectorXd z = init_state;
  for (int t = 0; t < n; ++t) {
    for (int e = 0; e < k; ++e) {
      Eigen::Vector2d xi(rng.next_gaussian(), rng.next_gaussian());
      Eigen::Vector2d accel = factors[e] * xi;
      z.segment<4>(4 * e) = propagate_state(model.entities[e], z.segment<4>(4 * e), accel);
    }
    sc.truth.row(t) = z.transpose();
    for (int e = 0; e < k; ++e) {
      sc.observations(t, 2 * e) = z[4 * e] + model.entities[e].sigma_x * rng.next_gaussian();
      sc.observations(t, 2 * e + 1) = z[4 * e + 1] + model.entities[e].sigma_y * rng.next_gaussian();
    }
  }
  return sc;
}

TrackingSeries SyntheticScenario::to_series(int entity, int entity_id) const {
  TrackingSeries s;
  s.entity_id = entity_id;
  s.dt = model.dt();
  s.samples.reserve(n);
  for (int t = 0; t < n; ++t)
    s.samples.push_back(Eigen::Vector2d(observations(t, 2 * entity), observations(t, 2 * entity + 1)));
  return s;
}

OracleResult conditioning_oracle(const StackedModel& model, const Eigen::MatrixXd& observations,
                                 const Eigen::VectorXd& prior_mean,
                                 const Eigen::MatrixXd& prior_cov) {
  const int n = static_cast<int>(observations.rows());
  const int m = model.state_dim();
  const int p = model.obs_dim();
  if (n < 1 || n > 15)
    throw NumericError("conditioning_oracle: n must be in [1, 15]");
  if (observations.cols() != p || prior_mean.size() != m || prior_cov.rows() != m ||
      prior_cov.cols() != m)
    throw NumericError("conditioning_oracle: dimension mismatch");

  const Eigen::MatrixXd T = model.transition();
  const Eigen::MatrixXd W = model.observation();
  Eigen::MatrixXd R = model.disturbance();
  const Eigen::MatrixXd RQR = R * model.process_cov() * R.transpose();
  Eigen::MatrixXd sigma = model.noise_variances().asDiagonal();

  // State means and marginal covariances; obs row t corresponds to the
  // state after t+1 propagation-free prior steps (prior applies at t = 0).
  std::vector<Eigen::VectorXd> mu_z(n);
  std::vector<Eigen::MatrixXd> var_z(n);
  mu_z[0] = prior_mean;
  var_z[0] = prior_cov;
  for (int t = 1; t < n; ++t) {
    mu_z[t] = T * mu_z[t - 1];
    var_z[t] = T * var_z[t - 1] * T.transpose() + RQR;
  }
  // cov_z(s, t) for s <= t equals var_z[s] * (T^(t-s))^T.
  std::vector<std::vector<Eigen::MatrixXd>> cov_z(n, std::vector<Eigen::MatrixXd>(n));
  for (int s = 0; s < n; ++s) {
    cov_z[s][s] = var_z[s];
    for (int t = s + 1; t < n; ++t) cov_z[s][t] = cov_z[s][t - 1] * T.transpose();
  }
  auto cov_z_at = [&](int s, int t) -> Eigen::MatrixXd {
    if (s <= t) return cov_z[s][t];
    return cov_z[t][s].transpose();
  };

  // Flatten observed scalar components in time order.
  struct ObsComp {
    int t;
    int i;
  };
  std::vector<ObsComp> comps;
  for (int t = 0; t < n; ++t)
    for (int i = 0; i < p; ++i)
      if (!std::isnan(observations(t, i))) comps.push_back({t, i});
  const int q = static_cast<int>(comps.size());

  Eigen::MatrixXd var_y(q, q);
  Eigen::VectorXd mu_y(q), y(q);
  for (int a = 0; a < q; ++a) {
    const auto [ta, ia] = comps[a];
    mu_y[a] = W.row(ia).dot(mu_z[ta]);
    y[a] = observations(ta, ia);
    for (int b = 0; b <= a; ++b) {
      const auto [tb, ib] = comps[b];
      double v = W.row(ia) * cov_z_at(ta, tb) * W.row(ib).transpose();
      if (ta == tb && ia == ib) v += sigma(ia, ia);
      var_y(a, b) = v;
      var_y(b, a) = v;
    }
  }

  OracleResult out;
  out.mean.resize(n);
  out.cov.resize(n);

  // Joint log-density of all observed components.
  {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(var_y);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0)
      throw NumericError("conditioning_oracle: joint observation covariance singular");
    const Eigen::VectorXd r = y - mu_y;
    const double log_det = ldlt.vectorD().array().log().sum();
    out.log_density = -0.5 * (q * std::log(2.0 * kPi) + log_det + r.dot(ldlt.solve(r)));
  }

  // Filtered moments: condition z_t on components up to and including t.
  for (int t = 0; t < n; ++t) {
    int q_t = 0;
    while (q_t < q && comps[q_t].t <= t) ++q_t;
    if (q_t == 0) {
      out.mean[t] = mu_z[t];
      out.cov[t] = var_z[t];
      continue;
    }
    Eigen::MatrixXd cross(m, q_t);
    for (int b = 0; b < q_t; ++b)
      cross.col(b) = cov_z_at(t, comps[b].t) * W.row(comps[b].i).transpose();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(var_y.topLeftCorner(q_t, q_t));
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0)
      throw NumericError("conditioning_oracle: observation covariance singular at step " +
                         std::to_string(t));
    const Eigen::VectorXd r = y.head(q_t) - mu_y.head(q_t);
    out.mean[t] = mu_z[t] + cross * ldlt.solve(r);
    out.cov[t] = var_z[t] - cross * ldlt.solve(cross.transpose());
    out.cov[t] = 0.5 * (out.cov[t] + out.cov[t].transpose()).eval();
  }
  return out;
}

namespace {

// Builds the raw path around the origin, then translates it (seeded) so the
// whole path sits inside the field with margin.
TrackingSeries finish_path(std::vector<Eigen::Vector2d> pts, Pcg32& rng, double jitter_cm,
                           double dt, const FieldSpec& field, int entity_id) {
  Eigen::Vector2d lo = pts.front(), hi = pts.front();
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double margin = 200.0;
  const double tx_lo = field.x_min + margin - lo.x();
  const double tx_hi = field.x_max - margin - hi.x();
  const double ty_lo = field.y_min + margin - lo.y();
  const double ty_hi = field.y_max - margin - hi.y();
  if (tx_lo > tx_hi || ty_lo > ty_hi)
    throw DataError("scripted_trajectory: path does not fit inside the field");
  Eigen::Vector2d shift(tx_lo + (tx_hi - tx_lo) * rng.next_unit(),
                        ty_lo + (ty_hi - ty_lo) * rng.next_unit());

  TrackingSeries s;
  s.entity_id = entity_id;
  s.dt = dt;
  s.samples.reserve(pts.size());
  for (auto& p : pts) {
    Eigen::Vector2d q = p + shift;
    if (jitter_cm > 0.0)
      q += jitter_cm * Eigen::Vector2d(rng.next_gaussian(), rng.next_gaussian());
    q.x() = std::min(std::max(q.x(), field.x_min), field.x_max);
    q.y() = std::min(std::max(q.y(), field.y_min), field.y_max);
    s.samples.push_back(q);
  }
  return s;
}

}  // namespace

TrackingSeries scripted_trajectory(TrajectoryShape shape, double duration_s, std::uint64_t seed,
                                   double jitter_cm, double dt, const FieldSpec& field,
                                   int entity_id) {
  if (dt <= 0.0) throw DataError("scripted_trajectory: dt must be positive");
  const double steps = duration_s / dt;
  const int n = static_cast<int>(std::lround(steps));
  if (n < 2 || std::abs(steps - n) > 1e-9)
    throw DataError("scripted_trajectory: duration must be a positive multiple of dt");

  Pcg32 rng(seed);
  std::vector<Eigen::Vector2d> pts;
  pts.reserve(n);

  // Paths are sized against the field so finish_path can always place them.
  const double usable = std::min(field.width(), 2.0 * field.height()) - 500.0;

  switch (shape) {
    case TrajectoryShape::Line: {
      const double v_max = std::min(600.0, usable / duration_s);
      const double speed = v_max * (0.4 + 0.6 * rng.next_unit());  // cm/s
      const double heading = 2.0 * kPi * rng.next_unit();
      const Eigen::Vector2d v(speed * std::cos(heading), speed * std::sin(heading));
      for (int i = 0; i < n; ++i) pts.push_back(v * (i * dt));
      break;
    }
    case TrajectoryShape::Loop: {
      const double radius =
          std::min(field.height() / 2.0 - 300.0, 300.0 + 700.0 * rng.next_unit());
      const double phase = 2.0 * kPi * rng.next_unit();
      for (int i = 0; i < n; ++i) {
        const double a = phase + 2.0 * kPi * static_cast<double>(i) / (n - 1);
        pts.emplace_back(radius * std::cos(a), radius * std::sin(a));
      }
      break;
    }
    case TrajectoryShape::SprintAndLoop: {
      // Sprint east, a double loop, then a slower return west; the sprint
      // is the fastest segment by construction.
      const int n_sprint = n * 2 / 5;
      const int n_loop = n * 2 / 5;
      const int n_back = n - n_sprint - n_loop;
      const double t_sprint = n_sprint * dt;
      const double sprint_dist =
          std::min(usable * 0.8, (5000.0 + 1000.0 * rng.next_unit()) *
                                     std::clamp(duration_s / 50.0, 0.1, 1.0));
      const double sprint_speed = sprint_dist / t_sprint;
      const double slow_factor = 0.55;
      const double radius =
          std::min(slow_factor * sprint_speed * (n_loop * dt) / (4.0 * kPi),
                   field.height() / 2.0 - 300.0);
      for (int i = 0; i < n_sprint; ++i) pts.emplace_back(i * dt * sprint_speed, 0.0);
      const Eigen::Vector2d center(n_sprint * dt * sprint_speed, radius);
      for (int i = 0; i < n_loop; ++i) {
        const double a = -kPi / 2.0 + 4.0 * kPi * static_cast<double>(i) / n_loop;
        pts.push_back(center + radius * Eigen::Vector2d(std::cos(a), std::sin(a)));
      }
      const Eigen::Vector2d pos = center + radius * Eigen::Vector2d(0.0, -1.0);
      const double back_speed = slow_factor * sprint_speed;
      for (int i = 0; i < n_back; ++i)
        pts.push_back(pos + Eigen::Vector2d(-back_speed * i * dt, 0.0));
      break;
    }
  }
  return finish_path(std::move(pts), rng, jitter_cm, dt, field, entity_id);
}

}  // namespace kinetrack
