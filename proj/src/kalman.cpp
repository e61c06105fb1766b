#include "kinetrack/kalman.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "kinetrack/errors.hpp"

namespace kinetrack {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kCondLimit = 1e12;

void symmetrize(Eigen::MatrixXd& m) { m = 0.5 * (m + m.transpose()).eval(); }

std::vector<int> observed_indices(const Eigen::VectorXd& obs) {
  std::vector<int> idx;
  for (int i = 0; i < obs.size(); ++i)
    if (!std::isnan(obs[i])) idx.push_back(i);
  return idx;
}

struct ModelMatrices {
  Eigen::MatrixXd T;
  Eigen::MatrixXd W;
  Eigen::MatrixXd RQR;  // R Q R^T
  Eigen::VectorXd sigma2;
};

ModelMatrices assemble(const StackedModel& model) {
  ModelMatrices mm;
  mm.T = model.transition();
  mm.W = model.observation();
  Eigen::MatrixXd R = model.disturbance();
  mm.RQR = R * model.process_cov() * R.transpose();
  mm.sigma2 = model.noise_variances();
  return mm;
}

// Cholesky solve of the observed-subset innovation system. Throws on a
// numerically singular F (condition estimate > 1e12).
struct InnovationSolve {
  Eigen::MatrixXd F_inv;  // explicit inverse (p_obs is small)
  double log_det = 0.0;
};

InnovationSolve solve_innovation(const Eigen::MatrixXd& F, int step) {
  Eigen::LLT<Eigen::MatrixXd> llt(F);
  if (llt.info() != Eigen::Success || llt.rcond() < 1.0 / kCondLimit)
    throw NumericError("kalman: innovation covariance F_t numerically singular at step " +
                       std::to_string(step));
  InnovationSolve out;
  out.F_inv = llt.solve(Eigen::MatrixXd::Identity(F.rows(), F.cols()));
  out.log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return out;
}

// Expands subset innovation data back to full observation dimension.
InnovationRecord make_record(const std::vector<int>& idx, const Eigen::VectorXd& delta_sub,
                             const Eigen::MatrixXd& F_sub, const Eigen::MatrixXd& K_sub, int p,
                             int n_state) {
  InnovationRecord rec;
  rec.delta = Eigen::VectorXd::Constant(p, std::numeric_limits<double>::quiet_NaN());
  rec.F = Eigen::MatrixXd::Zero(p, p);
  rec.K = Eigen::MatrixXd::Zero(n_state, p);
  rec.observed.assign(p, false);
  for (std::size_t a = 0; a < idx.size(); ++a) {
    rec.observed[idx[a]] = true;
    rec.delta[idx[a]] = delta_sub[a];
    rec.K.col(idx[a]) = K_sub.col(a);
    for (std::size_t b = 0; b < idx.size(); ++b) rec.F(idx[a], idx[b]) = F_sub(a, b);
  }
  return rec;
}

// Internal filter state carrying the two-matrix diffuse decomposition.
// P_inf is exactly zero once the diffuse phase has ended.
struct DiffuseState {
  Eigen::VectorXd Z;
  Eigen::MatrixXd P_star;
  Eigen::MatrixXd P_inf;

  bool diffuse(double scale) const { return P_inf.lpNorm<Eigen::Infinity>() > 1e-9 * scale; }
};

void clean_p_inf(Eigen::MatrixXd& P_inf, double scale) {
  if (P_inf.lpNorm<Eigen::Infinity>() <= 1e-9 * scale) P_inf.setZero();
}

// Sequential scalar update of one time step; exact for diagonal Sigma and
// valid in both the diffuse phase and the proper phase. Used by the
// univariate pass and as the batch fallback when F_inf is singular.
void univariate_time_step(const ModelMatrices& mm, DiffuseState& s, const Eigen::VectorXd& obs,
                          const std::vector<int>& idx, double inf_scale, LoglikTerm& term,
                          InnovationRecord& rec, int step) {
  const int p = static_cast<int>(mm.sigma2.size());
  const int n = static_cast<int>(s.Z.size());
  rec.delta = Eigen::VectorXd::Constant(p, std::numeric_limits<double>::quiet_NaN());
  rec.F = Eigen::MatrixXd::Zero(p, p);
  rec.K = Eigen::MatrixXd::Zero(n, p);
  rec.observed.assign(p, false);

  for (int i : idx) {
    rec.observed[i] = true;
    const Eigen::RowVectorXd w = mm.W.row(i);
    const double v = obs[i] - w.dot(s.Z);
    const Eigen::VectorXd m_star = s.P_star * w.transpose();
    const double f_star = w.dot(m_star) + mm.sigma2[i];
    rec.delta[i] = v;
    if (s.P_inf.size() > 0 && s.P_inf.lpNorm<Eigen::Infinity>() > 0.0) {
      const Eigen::VectorXd m_inf = s.P_inf * w.transpose();
      const double f_inf = w.dot(m_inf);
      if (f_inf > 1e-12 * std::max(1.0, inf_scale)) {
        // Exact diffuse scalar update.
        s.Z += m_inf * (v / f_inf);
        s.P_star += m_inf * m_inf.transpose() * (f_star / (f_inf * f_inf)) -
                    (m_star * m_inf.transpose() + m_inf * m_star.transpose()) / f_inf;
        s.P_inf -= m_inf * m_inf.transpose() / f_inf;
        rec.F(i, i) = f_inf;
        rec.K.col(i) = m_inf;
        continue;
      }
    }
    if (f_star <= 0.0)
      throw NumericError("kalman: scalar innovation variance nonpositive at step " +
                         std::to_string(step));
    s.Z += m_star * (v / f_star);
    s.P_star -= m_star * m_star.transpose() / f_star;
    rec.F(i, i) = f_star;
    rec.K.col(i) = m_star;
    term.log_det_F += std::log(f_star);
    term.quad += v * v / f_star;
    term.p_observed += 1;
  }
  symmetrize(s.P_star);
  if (s.P_inf.size() > 0) symmetrize(s.P_inf);
}

// Multivariate exact diffuse update (F_inf nonsingular on the observed set).
void diffuse_batch_update(const ModelMatrices& mm, DiffuseState& s, const Eigen::VectorXd& obs,
                          const std::vector<int>& idx, LoglikTerm& term, InnovationRecord& rec,
                          int step) {
  const int po = static_cast<int>(idx.size());
  Eigen::MatrixXd Wo(po, s.Z.size());
  Eigen::VectorXd yo(po), s2(po);
  for (int a = 0; a < po; ++a) {
    Wo.row(a) = mm.W.row(idx[a]);
    yo[a] = obs[idx[a]];
    s2[a] = mm.sigma2[idx[a]];
  }
  const Eigen::MatrixXd M_inf = s.P_inf * Wo.transpose();
  const Eigen::MatrixXd M_star = s.P_star * Wo.transpose();
  const Eigen::MatrixXd F_inf = Wo * M_inf;
  Eigen::MatrixXd F_star = Wo * M_star;
  F_star += s2.asDiagonal();
  const Eigen::VectorXd delta = yo - Wo * s.Z;

  auto sol = solve_innovation(F_inf, step);
  const Eigen::MatrixXd F1 = sol.F_inv;
  const Eigen::MatrixXd F2 = -F1 * F_star * F1;

  s.Z += M_inf * (F1 * delta);
  s.P_star -= M_star * F1 * M_inf.transpose() + M_inf * F1 * M_star.transpose() +
              M_inf * F2 * M_inf.transpose();
  s.P_inf -= M_inf * F1 * M_inf.transpose();
  symmetrize(s.P_star);
  symmetrize(s.P_inf);

  term.log_det_F = sol.log_det;  // det of F_inf; excluded from the total
  term.quad = 0.0;
  term.p_observed = po;
  rec = make_record(idx, delta, F_inf, M_inf, static_cast<int>(mm.sigma2.size()),
                    static_cast<int>(s.Z.size()));
}

// Proper-prior update; optionally Joseph-stabilized for large-kappa runs.
void proper_batch_update(const ModelMatrices& mm, DiffuseState& s, const Eigen::VectorXd& obs,
                         const std::vector<int>& idx, bool joseph, LoglikTerm& term,
                         InnovationRecord& rec, int step) {
  const int po = static_cast<int>(idx.size());
  Eigen::MatrixXd Wo(po, s.Z.size());
  Eigen::VectorXd yo(po), s2(po);
  for (int a = 0; a < po; ++a) {
    Wo.row(a) = mm.W.row(idx[a]);
    yo[a] = obs[idx[a]];
    s2[a] = mm.sigma2[idx[a]];
  }
  const Eigen::MatrixXd K = s.P_star * Wo.transpose();
  Eigen::MatrixXd F = Wo * K;
  F += s2.asDiagonal();
  const Eigen::VectorXd delta = yo - Wo * s.Z;

  auto sol = solve_innovation(F, step);
  const Eigen::MatrixXd gain = K * sol.F_inv;
  s.Z += gain * delta;
  if (joseph) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(s.Z.size(), s.Z.size()) - gain * Wo;
    s.P_star = A * s.P_star * A.transpose() + gain * s2.asDiagonal() * gain.transpose();
  } else {
    s.P_star -= gain * K.transpose();
  }
  symmetrize(s.P_star);

  term.log_det_F = sol.log_det;
  term.quad = delta.dot(sol.F_inv * delta);
  term.p_observed = po;
  rec = make_record(idx, delta, F, K, static_cast<int>(mm.sigma2.size()),
                    static_cast<int>(s.Z.size()));
}

void time_update(const ModelMatrices& mm, DiffuseState& s, double inf_scale) {
  s.Z = mm.T * s.Z;
  s.P_star = mm.T * s.P_star * mm.T.transpose() + mm.RQR;
  symmetrize(s.P_star);
  if (s.P_inf.size() > 0 && s.P_inf.lpNorm<Eigen::Infinity>() > 0.0) {
    s.P_inf = mm.T * s.P_inf * mm.T.transpose();
    symmetrize(s.P_inf);
    clean_p_inf(s.P_inf, inf_scale);
  }
}

FilterPassResult run_pass(const StackedModel& model, const Eigen::MatrixXd& obs,
                          const DiffuseInit& init, bool univariate) {
  const int n_state = model.state_dim();
  const int p = model.obs_dim();
  if (obs.cols() != p)
    throw NumericError("kalman: observation dimension mismatch (expected " + std::to_string(p) +
                       " columns)");
  ModelMatrices mm = assemble(model);

  DiffuseState s;
  s.Z = init.mean.size() ? init.mean : Eigen::VectorXd::Zero(n_state);
  if (s.Z.size() != n_state) throw NumericError("kalman: init mean dimension mismatch");
  s.P_star = init.P_star.size() ? init.P_star : Eigen::MatrixXd::Zero(n_state, n_state);
  Eigen::MatrixXd p_inf =
      init.P_inf.size() ? init.P_inf : Eigen::MatrixXd::Identity(n_state, n_state);
  if (init.mode == DiffuseInit::Mode::LargeKappa) {
    s.P_star += init.kappa * p_inf;
    s.P_inf = Eigen::MatrixXd::Zero(n_state, n_state);
  } else {
    s.P_inf = p_inf;
  }
  const double inf_scale = std::max(1.0, s.P_inf.lpNorm<Eigen::Infinity>());
  const bool joseph = init.mode == DiffuseInit::Mode::LargeKappa;

  FilterPassResult out;
  const int n = static_cast<int>(obs.rows());
  out.predicted.reserve(n);
  out.filtered.reserve(n);
  out.innovations.reserve(n);
  out.loglik_terms.reserve(n);

  for (int t = 0; t < n; ++t) {
    const bool step_diffuse = s.diffuse(inf_scale);
    out.predicted.push_back({s.Z, s.P_star, t});

    LoglikTerm term;
    term.diffuse = step_diffuse;
    InnovationRecord rec;
    const Eigen::VectorXd row = obs.row(t).transpose();
    const std::vector<int> idx = observed_indices(row);

    if (idx.empty()) {
      rec.delta = Eigen::VectorXd::Constant(p, std::numeric_limits<double>::quiet_NaN());
      rec.F = Eigen::MatrixXd::Zero(p, p);
      rec.K = Eigen::MatrixXd::Zero(n_state, p);
      rec.observed.assign(p, false);
    } else if (univariate) {
      univariate_time_step(mm, s, row, idx, inf_scale, term, rec, t);
      out.max_inverted_dim = std::max(out.max_inverted_dim, 1);
    } else if (step_diffuse) {
      // Batch diffuse step; falls back to sequential scalars when the
      // diffuse innovation covariance is singular on the observed set.
      Eigen::MatrixXd Wo(idx.size(), n_state);
      for (std::size_t a = 0; a < idx.size(); ++a) Wo.row(a) = mm.W.row(idx[a]);
      Eigen::MatrixXd F_inf = Wo * s.P_inf * Wo.transpose();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(F_inf);
      const double emax = es.eigenvalues().maxCoeff();
      const double emin = es.eigenvalues().minCoeff();
      if (emax <= 1e-12 * inf_scale) {
        proper_batch_update(mm, s, row, idx, joseph, term, rec, t);
        out.max_inverted_dim = std::max(out.max_inverted_dim, static_cast<int>(idx.size()));
      } else if (emin <= 1e-12 * emax) {
        univariate_time_step(mm, s, row, idx, inf_scale, term, rec, t);
        out.max_inverted_dim = std::max(out.max_inverted_dim, 1);
      } else {
        diffuse_batch_update(mm, s, row, idx, term, rec, t);
        out.max_inverted_dim = std::max(out.max_inverted_dim, static_cast<int>(idx.size()));
      }
      clean_p_inf(s.P_inf, inf_scale);
    } else {
      proper_batch_update(mm, s, row, idx, joseph, term, rec, t);
      out.max_inverted_dim = std::max(out.max_inverted_dim, static_cast<int>(idx.size()));
    }

    out.filtered.push_back({s.Z, s.P_star, t});
    out.innovations.push_back(std::move(rec));
    out.loglik_terms.push_back(term);
    if (term.diffuse) ++out.diffuse_steps;

    time_update(mm, s, inf_scale);
  }
  out.one_step_ahead = {s.Z, s.P_star, n};
  return out;
}

}  // namespace

DiffuseInit DiffuseInit::exact_diffuse(int dim) {
  DiffuseInit d;
  d.mode = Mode::ExactDiffuse;
  d.mean = Eigen::VectorXd::Zero(dim);
  d.P_star = Eigen::MatrixXd::Zero(dim, dim);
  d.P_inf = Eigen::MatrixXd::Identity(dim, dim);
  return d;
}

DiffuseInit DiffuseInit::large_kappa(int dim, double kappa) {
  DiffuseInit d = exact_diffuse(dim);
  d.mode = Mode::LargeKappa;
  d.kappa = kappa;
  return d;
}

DiffuseInit DiffuseInit::proper(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  DiffuseInit d;
  d.mode = Mode::ExactDiffuse;
  d.mean = mean;
  d.P_star = cov;
  d.P_inf = Eigen::MatrixXd::Zero(mean.size(), mean.size());
  return d;
}

double FilterPassResult::log_likelihood() const {
  double total = 0.0;
  for (const auto& term : loglik_terms) {
    if (term.diffuse) continue;
    total += -0.5 * (term.p_observed * std::log(2.0 * kPi) + term.log_det_F + term.quad);
  }
  return total;
}

StepResult filter_step(const StackedModel& model, const FilterState& prior,
                       const std::optional<Eigen::VectorXd>& obs) {
  ModelMatrices mm = assemble(model);
  DiffuseState s;
  s.Z = prior.mean;
  s.P_star = prior.cov;
  s.P_inf = Eigen::MatrixXd();

  StepResult out;
  out.term.diffuse = false;
  const int p = model.obs_dim();
  std::vector<int> idx;
  if (obs) {
    if (obs->size() != p) throw NumericError("filter_step: observation dimension mismatch");
    idx = observed_indices(*obs);
  }
  if (idx.empty()) {
    out.innovation.delta = Eigen::VectorXd::Constant(p, std::numeric_limits<double>::quiet_NaN());
    out.innovation.F = Eigen::MatrixXd::Zero(p, p);
    out.innovation.K = Eigen::MatrixXd::Zero(model.state_dim(), p);
    out.innovation.observed.assign(p, false);
  } else {
    proper_batch_update(mm, s, *obs, idx, /*joseph=*/false, out.term, out.innovation, prior.t);
  }
  out.posterior = {s.Z, s.P_star, prior.t};
  time_update(mm, s, 1.0);
  out.next = {s.Z, s.P_star, prior.t + 1};
  return out;
}

FilterPassResult filter_pass(const StackedModel& model, const Eigen::MatrixXd& obs,
                             const DiffuseInit& init) {
  return run_pass(model, obs, init, /*univariate=*/false);
}

FilterPassResult filter_pass(const StackedModel& model, const Window& window,
                             const DiffuseInit& init) {
  return run_pass(model, window.as_matrix(), init, /*univariate=*/false);
}

FilterPassResult univariate_filter_pass(const StackedModel& model, const Eigen::MatrixXd& obs,
                                        const DiffuseInit& init) {
  return run_pass(model, obs, init, /*univariate=*/true);
}

FilterPassResult univariate_filter_pass(const StackedModel& model, const Window& window,
                                        const DiffuseInit& init) {
  return run_pass(model, window.as_matrix(), init, /*univariate=*/true);
}

std::string filter_result_to_csv(const StackedModel& model, const FilterPassResult& result) {
  std::string out =
      "t,entity,x,y,vx,vy,p00,p10,p11,p20,p21,p22,p30,p31,p32,p33\n";
  char buf[512];
  for (const auto& st : result.filtered) {
    for (int e = 0; e < model.entity_count(); ++e) {
      const auto z = st.mean.segment<4>(4 * e);
      const Eigen::Matrix4d P = st.cov.block<4, 4>(4 * e, 4 * e);
      std::snprintf(buf, sizeof(buf),
                    "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                    "%.17g,%.17g,%.17g\n",
                    st.t, e, z[0], z[1], z[2], z[3], P(0, 0), P(1, 0), P(1, 1), P(2, 0), P(2, 1),
                    P(2, 2), P(3, 0), P(3, 1), P(3, 2), P(3, 3));
      out += buf;
    }
  }
  return out;
}

}  // namespace kinetrack
